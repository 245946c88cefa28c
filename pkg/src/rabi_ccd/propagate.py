"""Time integration of the Schrodinger equation with an exponential midpoint rule.

Two implementations share one contract (held start-of-step noise, H at the
step midpoint, exact exponential per step):

* :func:`evolve` works with any dense ``hamiltonian_at`` and diagonalizes
  per step.  It is the reference path.
* :class:`LayerPropagator` specializes to the trapped-ion Hamiltonians.  At
  fixed t every displacement factor is ``E exp(i eta x) E^dag`` with
  ``E = exp(i nu t n)``, so in the eigenbasis of the truncated ``x`` the
  Hamiltonian splits into 2x2 blocks.  The exact step exponential is then
  the product of analytic 2x2 exponentials and a fixed free-rotation matrix,
  which is what the compiled kernel applies.  Mode parity halves the cost of
  the free rotation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.linalg import eigh, expm

from . import _kernels
from .fock import OperatorSet, TruncationError
from .hamiltonian import NU, LayerConfig
from .noise import OUParams, initial_value, ou_coefficients
from .seeding import channel_rng

TAIL_LEVELS = 3
TAIL_MAX = 1e-6
NORM_DRIFT_MAX = 1e-8


class NormDriftError(RuntimeError):
    pass


class TrajectoryError(RuntimeError):
    """A trajectory failed a hygiene check; carries its index and seed for replay."""

    def __init__(self, message: str, index: int | None = None, seed: int | None = None):
        super().__init__(message)
        self.index = index
        self.seed = seed


def default_dt(nu: float = NU) -> float:
    """2 pi / (64 nu): 64 points per trap period."""
    return 2.0 * math.pi / (64.0 * nu)


@dataclass(frozen=True)
class IntegrationPlan:
    """Uniform grid ``t_k = k dt`` for ``k = 0..n_steps`` with ``n_steps dt = t_final``.

    Observables are recorded at multiples of ``output_stride`` and at the
    final step.
    """

    dt: float
    t_final: float
    output_stride: int = 1
    convergence_mode: str = "off"

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not self.t_final >= 0:
            raise ValueError("t_final must be >= 0")
        if int(self.output_stride) != self.output_stride or self.output_stride < 1:
            raise ValueError("output_stride must be a positive integer")
        if self.convergence_mode not in ("off", "halving-check"):
            raise ValueError(f"unknown convergence_mode {self.convergence_mode!r}")
        ratio = self.t_final / self.dt
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise ValueError("t_final must be an integer multiple of dt; use IntegrationPlan.covering")

    @classmethod
    def covering(cls, t_final: float, dt_max: float, output_stride: int = 1, **kw) -> "IntegrationPlan":
        """Largest dt <= dt_max that lands exactly on ``t_final``."""
        n = max(1, math.ceil(t_final / dt_max - 1e-9))
        return cls(t_final / n, t_final, output_stride, **kw)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def record_steps(self) -> np.ndarray:
        ks = np.arange(0, self.n_steps + 1, self.output_stride)
        if ks[-1] != self.n_steps:
            ks = np.append(ks, self.n_steps)
        return ks

    @property
    def record_times(self) -> np.ndarray:
        return self.record_steps * self.dt

    def check_resolution(self, nu: float = NU) -> None:
        if self.dt * nu > 2.0 * math.pi / 32.0 * (1 + 1e-12):
            raise ValueError(f"dt = {self.dt:.3g} s under-resolves the trap frequency (dt nu > 2 pi / 32)")

    def halved(self) -> "IntegrationPlan":
        return IntegrationPlan(self.dt / 2, self.t_final, 2 * self.output_stride, self.convergence_mode)


def unitary_step(state: np.ndarray, H: np.ndarray, dt: float, method: str = "eigh") -> np.ndarray:
    """exp(-i H dt) state via Hermitian eigendecomposition or ``scipy.linalg.expm``."""
    if method == "eigh":
        try:
            w, U = eigh(H)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError(f"eigensolver failed: {exc}") from exc
        return U @ (np.exp(-1j * w * dt)[:, None] * (U.conj().T @ state)) if state.ndim == 2 else \
            U @ (np.exp(-1j * w * dt) * (U.conj().T @ state))
    if method == "expm":
        return expm(-1j * dt * H) @ state
    raise ValueError(f"unknown method {method!r}")


@dataclass
class EvolutionResult:
    times: np.ndarray
    values: np.ndarray              # (n_records, n_observables)
    states: np.ndarray | None = None
    final_state: np.ndarray | None = None
    noise_path: dict | None = None  # channel -> held value per step


def _check_state(psi, t, n_fock, tail_k):
    norm = float(np.vdot(psi, psi).real)
    if abs(norm - 1.0) > NORM_DRIFT_MAX:
        raise NormDriftError(f"norm drift {abs(norm - 1):.3g} at t = {t:.6g} s")
    if n_fock is not None:
        amp = psi.reshape(2, n_fock)
        tail = float(np.sum(np.abs(amp[:, n_fock - tail_k:]) ** 2))
        if tail > TAIL_MAX:
            raise TruncationError(f"Fock tail {tail:.3g} > {TAIL_MAX:g} at t = {t:.6g} s; raise n_fock")


def evolve(state0: np.ndarray, hamiltonian_at: Callable, plan: IntegrationPlan,
           noise: Mapping | None = None, observables: Sequence[np.ndarray] = (),
           record_states: bool = False, n_fock: int | None = None, method: str = "eigh",
           tail_k: int = TAIL_LEVELS) -> EvolutionResult:
    """Reference integrator for one trajectory.

    Parameters
    ----------
    hamiltonian_at : callable
        ``hamiltonian_at(t, noise_values)`` returning a dense Hermitian matrix;
        ``noise_values`` maps channel name to the held value.
    noise : mapping, optional
        channel -> ``(OUParams, numpy Generator)`` for live streams, or
        channel -> array of per-step held values (a recorded path).
    n_fock : int, optional
        Enables the truncation-tail check at recording times.
    """
    psi = np.array(state0, dtype=complex)
    if abs(np.vdot(psi, psi).real - 1.0) > 1e-9:
        raise ValueError("state0 must be normalized")
    noise = dict(noise or {})
    n = plan.n_steps
    streams, paths = {}, {}
    for name, spec in noise.items():
        if isinstance(spec, tuple):
            params, rng = spec
            streams[name] = [initial_value(params, rng), *ou_coefficients(plan.dt, params), rng]
            paths[name] = np.empty(n)
        else:
            arr = np.asarray(spec, dtype=float)
            if len(arr) < n:
                raise ValueError(f"recorded noise path {name!r} is shorter than the plan")
            paths[name] = arr[:n]
    rec = set(plan.record_steps.tolist())
    values, states = [], []

    def record(k):
        t = k * plan.dt
        _check_state(psi, t, n_fock, tail_k)
        values.append([float(np.vdot(psi, O @ psi).real) for O in observables])
        if record_states:
            states.append(psi.copy())

    record(0)
    for k in range(n):
        snap = {}
        for name in noise:
            if name in streams:
                s = streams[name]
                snap[name] = s[0]
                paths[name][k] = s[0]
                s[0] = s[0] * s[1] + s[2] * s[3].standard_normal()
            else:
                snap[name] = float(paths[name][k])
        H = hamiltonian_at((k + 0.5) * plan.dt, snap)
        psi = unitary_step(psi, H, plan.dt, method)
        if k + 1 in rec:
            record(k + 1)
    return EvolutionResult(plan.record_times, np.array(values).reshape(len(values), len(observables)),
                           np.array(states) if record_states else None, psi, paths)


# --- structured trapped-ion propagator -----------------------------------------------

class LayerPropagator:
    """Batch propagator for one :class:`LayerConfig` at fixed ``dt``.

    Parameters
    ----------
    config : LayerConfig
    ops : OperatorSet
    dt : float
        Step size; all trajectories share the grid ``t_k = k dt``.
    """

    def __init__(self, config: LayerConfig, ops: OperatorSet, dt: float):
        self.config = config
        self.ops = ops
        self.dt = float(dt)
        N = ops.n_fock
        self.N = N
        xv, V = ops.x_eigensystem
        Mo = N // 2
        Me = N - Mo
        self.Me, self.Mo = Me, Mo
        # parity-adapted basis: even pairs, middle (odd N), odd pairs
        Q = np.zeros((N, N))
        for k in range(Mo):
            Q[:, k] = (V[:, k] + V[:, N - 1 - k]) / math.sqrt(2)
            Q[:, Me + k] = (V[:, k] - V[:, N - 1 - k]) / math.sqrt(2)
        if Me > Mo:
            Q[:, Mo] = V[:, Mo]
        self.Q = np.ascontiguousarray(Q)
        n = np.arange(N)
        K = Q.T @ (np.exp(-1j * config.nu * n * self.dt)[:, None] * Q)
        off = max(np.max(np.abs(K[:Me, Me:])), np.max(np.abs(K[Me:, :Me]))) if Mo else 0.0
        if off > 1e-12:
            raise AssertionError(f"parity blocks leak ({off:.3g}); eigenvector signs are inconsistent")
        Ke, Ko = K[:Me, :Me], K[Me:, Me:]
        self._ke = (np.ascontiguousarray(Ke.real.T), np.ascontiguousarray(Ke.imag.T))
        self._ko = (np.ascontiguousarray(Ko.real.T), np.ascontiguousarray(Ko.imag.T))
        lasers = config.lasers
        eta = np.array([las.eta for las in lasers])
        etax = np.exp(1j * eta[:, None] * xv[None, :Mo])
        self._etax = (np.ascontiguousarray(etax.real), np.ascontiguousarray(etax.imag))
        self._omega = np.array([las.omega for las in lasers], dtype=float)
        self._delta = np.array([las.delta for las in lasers], dtype=float)
        self._phi = np.array([las.phi for las in lasers], dtype=float)
        self._envk = np.array([las.envelope.code for las in lasers], dtype=np.int64)
        self._envp = np.array([las.envelope.parameter for las in lasers], dtype=float)
        self.channels = config.channels
        names = [c for c, _ in self.channels]
        self._chan = np.array([names.index(las.amplitude_noise_channel) if las.amplitude_noise_channel else -1
                               for las in lasers], dtype=np.int64)
        self._deph = names.index("delta_m") if "delta_m" in names else -1
        coeffs = [ou_coefficients(self.dt, p) for _, p in self.channels]
        self._decay = np.array([c[0] for c in coeffs], dtype=float)
        self._scale = np.array([c[1] for c in coeffs], dtype=float)

    def _interaction_phase(self, k: int) -> np.ndarray:
        """Diagonal of exp(i nu n (t_k + dt/2))."""
        return np.exp(1j * self.config.nu * np.arange(self.N) * (k + 0.5) * self.dt)

    def to_kernel(self, psi: np.ndarray, k: int = 0):
        psi = np.atleast_2d(np.asarray(psi, dtype=complex))
        ph = self._interaction_phase(k).conj()
        return _kernels.states_to_kernel(np.ascontiguousarray(psi), self.Q, ph.real.copy(), ph.imag.copy())

    def from_kernel(self, sr, si, k: int, spin=None, mode_phase=None) -> np.ndarray:
        """Simulation-picture states at step ``k``, optionally mapped by a frame.

        ``spin`` (2x2) and ``mode_phase`` (length N) define an extra map
        ``kron(spin, diag(mode_phase))`` applied on top.
        """
        ph = self._interaction_phase(k)
        if mode_phase is not None:
            ph = ph * mode_phase
        sp = np.eye(2, dtype=complex) if spin is None else np.asarray(spin, dtype=complex)
        return _kernels.kernel_to_states(sr, si, self.Q, ph.real.copy(), ph.imag.copy(), sp)

    def advance(self, sr, si, xn, normals, k0: int, nsteps: int) -> None:
        """In-place advance of a batch by ``nsteps`` from global step ``k0``."""
        nch = len(self.channels)
        if xn.shape != (sr.shape[0], nch) or normals.shape[:2] != (sr.shape[0], nch) or normals.shape[2] < nsteps:
            raise ValueError("noise arrays do not match the batch and channel count")
        _kernels.layer_chunk(sr, si, xn, normals, self._decay, self._scale,
                             self._ke[0], self._ke[1], self._ko[0], self._ko[1],
                             self._etax[0], self._etax[1],
                             self._omega, self._delta, self._phi, self._envk, self._envp,
                             self._chan, self._deph, self.dt, k0, nsteps)


def _noise_streams(channels, seeds):
    """Per-trajectory, per-channel generators and initial noise values."""
    rngs = [[channel_rng(s, c) for c in range(len(channels))] for s in seeds]
    x0 = np.array([[initial_value(p, rngs[b][c]) for c, (_, p) in enumerate(channels)]
                   for b in range(len(seeds))], dtype=float).reshape(len(seeds), len(channels))
    return rngs, x0


def evolve_layer_ensemble(config: LayerConfig, ops: OperatorSet, psi0: np.ndarray, plan: IntegrationPlan,
                          seeds: Sequence[int], recorder: Callable, frame: Callable | None = None,
                          check: bool = True, noise_chunk: int = 16384, tail_k: int = TAIL_LEVELS,
                          indices: Sequence[int] | None = None):
    """Run one trajectory per seed through the structured kernel.

    ``recorder(psi_batch, t)`` receives target-picture states of shape
    (n_traj, 2N) at every record time and returns an (n_traj, n_obs) array.
    ``frame(t)`` returns ``(spin, mode_phase)`` of the map from the
    simulation picture into the target picture; ``None`` keeps the
    simulation picture.

    Returns ``(times, values)`` with ``values`` of shape (n_traj, n_rec, n_obs).
    """
    plan.check_resolution(config.nu)
    prop = LayerPropagator(config, ops, plan.dt)
    ntraj = len(seeds)
    indices = list(range(ntraj)) if indices is None else list(indices)
    nch = len(prop.channels)
    rngs, xn = _noise_streams(prop.channels, seeds)
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.vdot(psi0, psi0).real - 1.0) > 1e-9:
        raise ValueError("psi0 must be normalized")
    sr, si = prop.to_kernel(np.repeat(psi0[None, :], ntraj, axis=0), 0)
    rec_steps = plan.record_steps
    out = []

    def record(k):
        t = k * plan.dt
        spin, mode = frame(t) if frame is not None else (None, None)
        psi = prop.from_kernel(sr, si, k, spin, mode)
        if check:
            norm, tail = _kernels.batch_norm_tail(psi, ops.n_fock, tail_k)
            for b in range(ntraj):
                if abs(norm[b] - 1.0) > NORM_DRIFT_MAX:
                    raise TrajectoryError(f"trajectory {indices[b]} (seed {seeds[b]}): norm drift "
                                          f"{abs(norm[b] - 1):.3g} at t = {t:.6g} s", indices[b], seeds[b])
                if tail[b] > TAIL_MAX:
                    raise TrajectoryError(f"trajectory {indices[b]} (seed {seeds[b]}): Fock tail {tail[b]:.3g} "
                                          f"> {TAIL_MAX:g} at t = {t:.6g} s; raise n_fock", indices[b], seeds[b])
        out.append(np.asarray(recorder(psi, t), dtype=float).reshape(ntraj, -1))

    record(0)
    k = 0
    normals = np.empty((ntraj, nch, 0))
    buf_start = 0
    for target in rec_steps[1:]:
        while k < target:
            if k - buf_start >= normals.shape[2]:
                m = min(noise_chunk, plan.n_steps - k)
                normals = np.empty((ntraj, nch, m))
                for b in range(ntraj):
                    for c in range(nch):
                        normals[b, c] = rngs[b][c].standard_normal(m)
                buf_start = k
            off = k - buf_start
            m = min(target - k, normals.shape[2] - off)
            prop.advance(sr, si, xn, normals[:, :, off:] if off else normals, k, m)
            k += m
        record(k)
    return plan.record_times, np.stack(out, axis=1)


def halving_deficit(config: LayerConfig, ops: OperatorSet, psi0: np.ndarray, plan: IntegrationPlan) -> float:
    """1 - |<psi_dt|psi_dt/2>| at ``t_final`` for the noiseless configuration."""
    cfg = config.noiseless()
    finals = []
    for p in (plan, plan.halved()):
        last = IntegrationPlan(p.dt, p.t_final, p.n_steps)
        keep = {}

        def grab(psi, t):
            keep["psi"] = psi[0].copy()
            return np.zeros((1, 0))

        evolve_layer_ensemble(cfg, ops, psi0, last, [0], grab)
        finals.append(keep["psi"])
    return float(1.0 - abs(np.vdot(finals[0], finals[1])))
