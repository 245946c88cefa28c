import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from rabi_ccd.fock import (PAULI, TruncationError, TruncationWarning, build_operator_set, coherent_state,
                           displacement_matrix, fock_state, product_state, spin_state, truncation_tail)


def test_operator_set_basics():
    ops = build_operator_set(6)
    assert ops.dim == 12
    a = ops.mode_a
    comm = a @ a.T - a.T @ a
    assert np.allclose(np.diag(comm)[:-1], 1.0)
    assert comm[-1, -1] == pytest.approx(-5.0)          # truncation artefact in the top level
    assert np.allclose(ops.x, np.kron(np.eye(2), a + a.T))
    assert np.allclose(ops.p, np.kron(np.eye(2), 1j * (a.T - a) / 2))
    assert np.allclose(ops.sp, np.kron([[0, 1], [0, 0]], np.eye(6)))
    # up (index 0) is the +1 eigenstate of sigma_z
    assert np.allclose(ops.sz @ product_state("up_z", 6), product_state("up_z", 6))
    assert np.allclose(ops.sigma("sigma_y"), ops.sy)
    with pytest.raises(ValueError):
        ops.x[0, 0] = 1.0
    with pytest.raises(ValueError):
        build_operator_set(1)


@pytest.mark.parametrize("N", [6, 7, 12, 13])
def test_x_eigensystem_parity_convention(N):
    ops = build_operator_set(N)
    xv, V = ops.x_eigensystem
    assert np.allclose(V.T @ V, np.eye(N), atol=1e-12)
    assert np.allclose(V @ np.diag(xv) @ V.T, ops.mode_x, atol=1e-12)
    parity = (-1.0) ** np.arange(N)
    for k in range(N):
        assert np.allclose(V[:, N - 1 - k], parity * V[:, k], atol=1e-12)


@pytest.mark.parametrize("label", ["up_x", "down_x", "up_y", "down_y", "up_z", "down_z"])
def test_spin_labels_are_eigenstates(label):
    sign = 1 if label.startswith("up") else -1
    v = spin_state(label)
    assert np.allclose(PAULI[label[-1]] @ v, sign * v)
    with pytest.raises(ValueError):
        spin_state("sideways")


def test_fock_and_product_states():
    assert np.array_equal(fock_state(2, 4), [0, 0, 1, 0])
    with pytest.raises(ValueError):
        fock_state(4, 4)
    psi = product_state("down_z", 3, mode=1)
    assert np.array_equal(psi, [0, 0, 0, 0, 1, 0])


@settings(max_examples=30, deadline=None)
@given(re=st.floats(-1.2, 1.2), im=st.floats(-1.2, 1.2))
def test_displacement_unitary_and_matches_laguerre(re, im):
    alpha = complex(re, im)
    N = 40
    D = displacement_matrix(alpha, N)
    assert np.allclose(D.conj().T @ D, np.eye(N), atol=1e-11)
    L = displacement_matrix(alpha, N, method="laguerre")
    assert np.allclose(D[:10, :10], L[:10, :10], atol=1e-9)


def test_displacement_on_vacuum_is_coherent_state():
    D = displacement_matrix(0.5, 30)
    assert np.allclose(D[:, 0], coherent_state(0.5, 30), atol=1e-12)
    # [DERIVED] oracle: scipy expm of the generator on a 4x larger space, restricted
    big = np.diag(np.sqrt(np.arange(1, 120.0)), 1)
    ref = expm(0.5 * big.T - 0.5 * big)[:30, 0]
    assert np.allclose(D[:, 0], ref, atol=1e-12)


def test_displacement_truncation_policy():
    with pytest.warns(TruncationWarning):
        displacement_matrix(2.0, 10)
    with pytest.raises(TruncationError):
        displacement_matrix(2.0, 10, strict=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        displacement_matrix(1.0, 10)


def test_truncation_tail_batch_and_errors():
    psi = np.zeros(8, dtype=complex)
    psi[3] = psi[7] = 1 / math.sqrt(2)
    assert truncation_tail(psi, 1) == pytest.approx(1.0)
    assert truncation_tail(psi, 1, 4) == pytest.approx(1.0)
    batch = np.stack([psi, product_state("up_z", 4)])
    assert np.allclose(truncation_tail(batch, 2), [1.0, 0.0])
    with pytest.raises(ValueError):
        truncation_tail(psi, 4)
    with pytest.raises(ValueError):
        truncation_tail(psi, 1, 5)
