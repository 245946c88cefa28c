import math

import numpy as np
import pytest
from scipy.linalg import eigh

from rabi_ccd.fock import TruncationError, build_operator_set, coherent_state, product_state
from rabi_ccd.hamiltonian import params_from_targets
from rabi_ccd.observables import (GAMMA, MU, ZETA, ProbeNonlinearityError, ancilla_position_readout,
                                  batch_expectation, batch_fidelity, expectation, fidelity, rabi_ground_state,
                                  scaling_point)

K = 2 * math.pi * 1e3


def test_fidelity_and_expectation():
    a = np.array([1, 0], dtype=complex)
    b = np.array([1, 1j]) / math.sqrt(2)
    assert fidelity(a, b) == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(ValueError):
        fidelity(a, np.ones(3))
    sz = np.diag([1.0, -1.0])
    assert expectation(a, sz) == 1.0
    with pytest.raises(ValueError):
        expectation(a, np.array([[0, 1], [0, 0]]))
    batch = np.stack([a, b])
    assert np.allclose(batch_expectation(batch, sz), [1.0, 0.0])
    assert np.allclose(batch_fidelity(batch, a), [1.0, 1 / math.sqrt(2)])


def test_ground_state_trivial_and_oracle():
    ops = build_operator_set(30)
    _, p0 = params_from_targets("rabi", 0, {"R": 3.0, "g": 0.0, "omega_mode": 1.0})
    e0, v0 = rabi_ground_state(p0, ops)
    assert e0 == pytest.approx(-1.5)                                   # [TRIVIAL] -Omega/2 at g = 0
    # [DERIVED] oracle: independently assembled Hamiltonian on a larger space
    _, p = params_from_targets("rabi", 1, {"R": 2.0, "g": 0.8, "omega_mode": 1.0})
    e, v = rabi_ground_state(p, ops)
    M = 80
    a = np.diag(np.sqrt(np.arange(1, M)), 1)
    sx = np.array([[0, 1], [1, 0]])
    sy = np.array([[0, -1j], [1j, 0]])
    H = 0.5 * p.Omega_tls * np.kron(sx, np.eye(M)) + np.kron(np.eye(2), a.T @ a) - p.lam * np.kron(sy, a + a.T)
    assert e == pytest.approx(eigh(H, eigvals_only=True, subset_by_index=[0, 0])[0], abs=1e-10)


def test_ground_state_truncation_guard():
    _, p = params_from_targets("rabi", 1, {"R": 100.0, "g": 1.0, "omega_mode": 1.0})
    with pytest.raises(TruncationError):
        rabi_ground_state(p, build_operator_set(6))


def test_scaling_point():
    assert GAMMA / (MU * (1 + ZETA)) == pytest.approx(1.0)
    sp = scaling_point(64.0, 3.2, -0.5, -0.75)
    assert sp.T == pytest.approx(0.05)
    assert sp.S == pytest.approx(16 * 0.25)
    with pytest.raises(ValueError):
        scaling_point(0.0, 1.0, 0.0, 0.0)


@pytest.mark.parametrize("alpha", [0.5, -0.3, 0.2 + 0.4j])
def test_ancilla_readout_on_coherent_states(alpha):
    N = 40
    ops = build_operator_set(N)
    psi = np.kron([0.0, 1.0], coherent_state(alpha, N))
    direct = expectation(psi, ops.x)
    for omega in (0.5 * K, 1 * K, 2 * K):
        est = ancilla_position_readout(psi, omega, ops=ops)
        assert est == pytest.approx(direct, rel=0.02)


def test_ancilla_readout_rejects_long_probe_grid():
    N = 30
    ops = build_operator_set(N)
    psi = np.kron([1.0, 0.0], coherent_state(1.0, N))
    with pytest.raises(ProbeNonlinearityError):
        ancilla_position_readout(psi, 1.0, probe_times=np.linspace(0.2, 1.0, 5), ops=ops)
    with pytest.raises(ValueError):
        ancilla_position_readout(psi, 0.0, ops=ops)


def test_ancilla_readout_zero_mean_state():
    psi = product_state("up_z", 20)
    assert ancilla_position_readout(psi, K) == pytest.approx(0.0, abs=1e-9)
