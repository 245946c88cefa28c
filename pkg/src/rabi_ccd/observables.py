"""Fidelities, expectation values, ground states, quench scaling and ancilla readout."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from . import _kernels
from .fock import OperatorSet, PAULI, TruncationError, truncation_tail
from .hamiltonian import RabiParams, ideal_rabi_hamiltonian

# critical exponents of the superradiant transition
MU = 2.0 / 3.0
GAMMA = 1.0
ZETA = 0.5


class ProbeNonlinearityError(ValueError):
    """Ancilla probe grid too long for a linear slope fit."""


def fidelity(psi: np.ndarray, phi: np.ndarray) -> float:
    """|<psi|phi>|."""
    psi, phi = np.asarray(psi), np.asarray(phi)
    if psi.shape != phi.shape:
        raise ValueError(f"dimension mismatch: {psi.shape} vs {phi.shape}")
    return float(abs(np.vdot(psi, phi)))


def _require_hermitian(op: np.ndarray) -> None:
    err = np.max(np.abs(op - op.conj().T))
    if err > 1e-12 * max(1.0, np.max(np.abs(op))):
        raise ValueError(f"operator is not Hermitian (max deviation {err:.3g})")


def expectation(state: np.ndarray, operator: np.ndarray) -> float:
    """Re <psi|O|psi>; warns if the imaginary residue exceeds 1e-10."""
    _require_hermitian(operator)
    val = np.vdot(state, operator @ state)
    if abs(val.imag) > 1e-10:
        warnings.warn(f"expectation value has imaginary residue {val.imag:.3g}", RuntimeWarning, stacklevel=2)
    return float(val.real)


def batch_expectation(states: np.ndarray, operator: np.ndarray) -> np.ndarray:
    """Row-wise :func:`expectation` for an (n, D) batch."""
    _require_hermitian(operator)
    re, im = _kernels.batch_expectation(np.ascontiguousarray(states, dtype=complex),
                                        np.ascontiguousarray(operator, dtype=complex))
    if np.any(np.abs(im) > 1e-10):
        warnings.warn("expectation value has imaginary residue above 1e-10", RuntimeWarning, stacklevel=2)
    return re


def batch_fidelity(states: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """|<ref|psi_b>| for every row."""
    states = np.ascontiguousarray(states, dtype=complex)
    ref = np.ascontiguousarray(ref, dtype=complex)
    if states.shape[-1] != ref.shape[-1]:
        raise ValueError("dimension mismatch")
    return _kernels.batch_overlap_abs(states, ref)


def rabi_ground_state(params: RabiParams, ops: OperatorSet, tail_k: int = 3,
                      tail_max: float = 1e-6) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of the (static) target Rabi Hamiltonian at its full coupling."""
    H = ideal_rabi_hamiltonian(params, ops)
    w, U = eigh(H, subset_by_index=[0, 0])
    v = U[:, 0]
    tail = truncation_tail(v, tail_k, ops.n_fock)
    if tail > tail_max:
        raise TruncationError(f"ground-state Fock tail {tail:.3g} > {tail_max:g} at N = {ops.n_fock}; use a larger N")
    return float(w[0]), v


@dataclass(frozen=True)
class ScalingPoint:
    """One point of the quench scaling function.

    ``T = R^{-gamma/(mu(1+zeta))} tau_Q`` (= tau_Q / R) and
    ``S = R^mu |sigma_final - sigma_gs|``.
    """

    R: float
    tau_Q: float
    T: float
    S: float


def scaling_point(R: float, tau_Q: float, sigma_final: float, sigma_gs: float) -> ScalingPoint:
    if not (R > 0 and tau_Q > 0):
        raise ValueError("R and tau_Q must be positive")
    T = R ** (-GAMMA / (MU * (1.0 + ZETA))) * tau_Q
    return ScalingPoint(R, tau_Q, T, R ** MU * abs(sigma_final - sigma_gs))


def ancilla_signal(psi: np.ndarray, ops: OperatorSet, probe_omega: float, probe_times) -> np.ndarray:
    """<sigma_y^A>(t) after attaching an ancilla in |up> and evolving under
    exp(-i Omega t sigma_x^A x).

    The ancilla doubles the space to 4N; the coupling commutes with
    everything but the ancilla, so it is exponentiated through the
    eigen-decomposition of its generator.
    """
    psi = np.asarray(psi, dtype=complex)
    full = np.kron(np.array([1.0, 0.0]), psi)                      # |up>_A (x) psi
    G = np.kron(PAULI["x"], ops.x)
    w, U = eigh(G)
    c = U.conj().T @ full
    sy = np.kron(PAULI["y"], ops.identity)
    out = []
    for t in np.atleast_1d(probe_times):
        st = U @ (np.exp(-1j * probe_omega * t * w) * c)
        out.append(np.vdot(st, sy @ st).real)
    return np.array(out)


def default_probe_times(psi: np.ndarray, ops: OperatorSet, probe_omega: float, n: int = 5,
                        max_angle: float = 1e-3) -> np.ndarray:
    """Five probe times with 2 Omega t_max sqrt(<x^2>) = ``max_angle``."""
    x_rms = np.sqrt(max(expectation(psi, ops.x @ ops.x), 1.0))
    t_max = max_angle / (2.0 * abs(probe_omega) * x_rms)
    return t_max * np.arange(1, n + 1) / n


def ancilla_position_readout(psi: np.ndarray, probe_omega: float, probe_times=None,
                             ops: OperatorSet | None = None, nonlinearity: float = 0.05,
                             floor: float = 1e-8) -> float:
    """Estimate <x> from the initial slope of the ancilla's <sigma_y>.

    With the ancilla in |up>, <sigma_y^A>(t) = -<sin(2 Omega t x)>, whose
    slope at t = 0 is -2 Omega <x>; the estimate is -slope / (2 Omega).
    The slope comes from a least-squares line through the origin over the
    probe points.  If the data depart from that line by more than
    ``nonlinearity`` of the linear signal at the last probe time (plus an
    absolute ``floor``) the grid is rejected.
    """
    psi = np.asarray(psi, dtype=complex)
    if ops is None:
        from .fock import build_operator_set
        ops = build_operator_set(len(psi) // 2)
    if probe_omega == 0:
        raise ValueError("probe_omega must be nonzero")
    if probe_times is None:
        probe_times = default_probe_times(psi, ops, probe_omega)
    t = np.asarray(probe_times, dtype=float)
    if np.any(t <= 0):
        raise ValueError("probe times must be positive")
    y = ancilla_signal(psi, ops, probe_omega, t)   # y(0) = 0 exactly
    slope = float(np.dot(t, y) / np.dot(t, t))
    dev = float(np.max(np.abs(y - slope * t)))
    if dev > nonlinearity * abs(slope) * t.max() + floor:
        raise ProbeNonlinearityError(f"probe response is nonlinear (deviation {dev:.3g} vs linear "
                                     f"{abs(slope) * t.max():.3g}); shrink the probe grid")
    return -slope / (2.0 * probe_omega)
