"""Named presets and the deterministic ensemble runner.

Each preset resolves to layer configurations, an ideal target model and an
integration plan.  Trajectory ``k`` of every ensemble uses the child seed
``child_seed(master_seed, k)``; trajectories run in contiguous blocks
(optionally in worker processes) and are reduced in trajectory order, so
results are bit-identical for any worker count.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh

from . import _kernels
from .fock import OperatorSet, TruncationError, build_operator_set, product_state
from .hamiltonian import (TWO_PI, DiracParams, NoiseModel, RabiParams, RWAValidityWarning,
                          frame_factors, ideal_dirac_hamiltonian, ideal_rabi_hamiltonian,
                          params_from_targets)
from .noise import (OUParams, analytic_coherence, analytic_moments, averaged_periodogram,
                    diffusion_from_T2, generate_realization, ou_coefficients,
                    spectral_density_analytic)
from .observables import batch_expectation, batch_fidelity, rabi_ground_state, scaling_point
from .propagate import IntegrationPlan, TrajectoryError, default_dt, evolve_layer_ensemble
from .seeding import channel_rng, trajectory_seeds

PRESETS = ("ou-demo", "coherence", "ccd-demo", "rabi", "rabi-dark", "qpt", "dirac")
QUBIT_DT = 0.2e-6


@dataclass(frozen=True)
class NoiseBlock:
    """Noise settings shared by every preset.

    ``tau_m`` and ``T2`` fix the dephasing process (its diffusion constant
    follows from the coherence condition); ``tau_omega`` and ``p`` fix the
    relative laser-amplitude process with ``c = 2 p^2 / tau_omega``.
    """

    tau_m: float = 50e-6
    T2: float = 3e-3
    tau_omega: float = 1e-3
    p: float = 1e-3
    correlated_12: bool = True
    dephasing_on: bool = True
    amplitude_on: bool = True
    c_override: float | None = None      # raw dephasing diffusion constant

    @property
    def enabled(self) -> bool:
        return self.dephasing_on or self.amplitude_on

    def dephasing(self) -> OUParams | None:
        if not self.dephasing_on:
            return None
        c = self.c_override if self.c_override is not None else diffusion_from_T2(self.tau_m, self.T2)
        return OUParams(self.tau_m, c)

    def amplitude(self) -> OUParams | None:
        if not self.amplitude_on:
            return None
        return OUParams(self.tau_omega, 2.0 * self.p ** 2 / self.tau_omega)

    def model(self) -> NoiseModel | None:
        if not self.enabled:
            return None
        return NoiseModel(self.dephasing(), self.amplitude(), self.correlated_12)

    def off(self) -> "NoiseBlock":
        return replace(self, dephasing_on=False, amplitude_on=False)


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to run one preset.

    ``targets`` holds (R, g, omega_mode) for Rabi and QPT or (r, c_D) for
    Dirac.  ``initial_states`` use the labels ``up_tls``, ``down_tls``,
    ``up_perp`` (layer-dependent axes) or a spin label such as ``up_x`` for
    qubit-only presets.  ``options`` carries preset-specific knobs (QPT grid,
    spectrum settings, layer-2 carrier).
    """

    name: str
    model: str
    layers: tuple[int, ...] = ()
    targets: Mapping[str, float] = field(default_factory=dict)
    initial_states: tuple[str, ...] = ()
    noise: NoiseBlock = field(default_factory=NoiseBlock)
    dt: float | None = None
    t_final: float = 0.0
    record_interval: float = 0.0
    n_trajectories: int = 1
    master_seed: int = 0
    n_fock: int | None = None
    fock_policy: str = "fixed"
    n_fock_max: int = 240
    drives: tuple[float, ...] = ()
    options: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in ("ou-demo", "qubit-only", "rabi", "qpt", "dirac"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.model in ("rabi", "qpt", "dirac"):
            if not self.layers or any(l not in (0, 1, 2) for l in self.layers):
                raise ValueError(f"layers must be drawn from 0, 1, 2; got {self.layers!r}")
            if self.n_fock is None or self.n_fock < 2:
                raise ValueError("trapped-ion presets need n_fock >= 2")
        elif self.layers:
            raise ValueError(f"model {self.model!r} has no protection layers")
        if self.fock_policy not in ("fixed", "adaptive"):
            raise ValueError("fock_policy must be 'fixed' or 'adaptive'")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.model != "qpt":
            if not self.t_final > 0:
                raise ValueError("t_final must be positive")
            if not 0 < self.record_interval <= self.t_final:
                raise ValueError("record_interval must lie in (0, t_final]")

    def step(self) -> float:
        if self.dt is not None:
            return self.dt
        if self.model in ("ou-demo", "qubit-only"):
            return QUBIT_DT
        return default_dt()

    def plan(self, t_final: float | None = None) -> IntegrationPlan:
        """Grid landing on ``t_final`` with records every ``record_interval``."""
        T = self.t_final if t_final is None else t_final
        dt = self.step()
        n_rec = max(1, int(round(T / self.record_interval)))
        steps_per_rec = max(1, math.ceil(self.record_interval / dt - 1e-9))
        return IntegrationPlan(T / (n_rec * steps_per_rec), T, steps_per_rec)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["noise"] = asdict(self.noise)
        return out


@dataclass
class EnsembleResult:
    """Trajectory-averaged observables on a common grid."""

    name: str
    grid: np.ndarray
    grid_label: str
    observables: list[str]
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    n_trajectories: int
    master_seed: int
    trajectory_seeds: list[int]
    metadata: dict = field(default_factory=dict)
    companions: dict[str, "EnsembleResult"] = field(default_factory=dict)
    per_trajectory: dict[str, np.ndarray] | None = field(default=None, repr=False)


def reduce_trajectories(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error over axis 0 (trajectories, in fixed order)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    mean = values.mean(axis=0)
    if n > 1:
        se = values.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        se = np.zeros_like(mean)
    return mean, se


def quench_envelope(t: float, tau_Q: float, omega_f: float) -> float:
    """Linear ramp of a laser amplitude from 0 to ``omega_f`` over ``tau_Q``."""
    if not tau_Q > 0:
        raise ValueError("tau_Q must be positive")
    if not 0.0 <= t <= tau_Q:
        raise ValueError(f"t = {t!r} lies outside [0, tau_Q]")
    return omega_f * t / tau_Q


# --- presets ----------------------------------------------------------------------

def _preset(name: str) -> ExperimentSpec:
    k = TWO_PI * 1e3
    if name == "ou-demo":
        return ExperimentSpec(name, "ou-demo", dt=0.5e-6, t_final=0.5e-3, record_interval=0.5e-6,
                              n_trajectories=10_000,
                              noise=NoiseBlock(tau_m=50e-6, c_override=1.5e11, amplitude_on=False),
                              options={"spectrum_realizations": 100, "spectrum_length": 0.1})
    if name == "coherence":
        return ExperimentSpec(name, "qubit-only", initial_states=("up_x",), t_final=6e-3, record_interval=20e-6,
                              n_trajectories=1000, noise=NoiseBlock(amplitude_on=False), drives=(0.0,))
    if name == "ccd-demo":
        return ExperimentSpec(name, "qubit-only", initial_states=("up_x",), t_final=6e-3, record_interval=20e-6,
                              n_trajectories=1000, noise=NoiseBlock(amplitude_on=False),
                              drives=(0.5 * k, 5 * k, 50 * k))
    if name in ("rabi", "rabi-dark"):
        states = ("up_tls", "up_perp") if name == "rabi" else ("down_tls",)
        return ExperimentSpec(name, "rabi", layers=(0, 1, 2), targets={"R": 1.0, "g": 0.25, "omega_mode": 5 * k},
                              initial_states=states, t_final=8e-3, record_interval=20e-6,
                              n_trajectories=200, n_fock=30)
    if name == "qpt":
        return ExperimentSpec(name, "qpt", layers=(0, 1, 2), targets={"g": 1.0},
                              initial_states=("down_tls",), record_interval=1.0,
                              n_trajectories=50, n_fock=60, fock_policy="adaptive",
                              options={"R_values": (50.0, 100.0), "T_grid": tuple(np.geomspace(4e-4, 0.086, 6)),
                                       "omega_mode": {0: 1 * k, 1: 1 * k, 2: 0.4 * k}})
    if name == "dirac":
        cD = 1.25 * k
        return ExperimentSpec(name, "dirac", layers=(0, 1, 2), targets={"r": 2.0, "c_D": cD},
                              initial_states=("up_perp",), t_final=3 * TWO_PI / cD, record_interval=10e-6,
                              n_trajectories=200, n_fock=100)
    raise ValueError(f"unknown experiment {name!r}; expected one of {PRESETS}")


_NOISE_FIELDS = {f.name for f in fields(NoiseBlock)}
_SPEC_FIELDS = {f.name for f in fields(ExperimentSpec)} - {"name", "model"}


def build_experiment(name: str, overrides: Mapping[str, object] | None = None) -> ExperimentSpec:
    """Preset ``name`` with optional overrides.

    Override keys are ExperimentSpec field names, ``noise.<field>`` (or a
    ``noise`` mapping), ``targets``/``options`` mappings (merged), and the
    shorthands ``layer`` (single layer), ``tau`` (dephasing correlation
    time) and ``noiseless`` (switch every noise channel off).
    """
    spec = _preset(name)
    if not overrides:
        return spec
    kw: dict = {}
    noise = asdict(spec.noise)
    targets = dict(spec.targets)
    options = dict(spec.options)
    for key, val in overrides.items():
        if val is None:
            continue
        if key == "noise" and isinstance(val, Mapping):
            for nk, nv in val.items():
                if nk not in _NOISE_FIELDS:
                    raise ValueError(f"unknown noise setting {nk!r}")
                noise[nk] = nv
        elif key.startswith("noise."):
            nk = key.split(".", 1)[1]
            if nk not in _NOISE_FIELDS:
                raise ValueError(f"unknown noise setting {nk!r}")
            noise[nk] = val
        elif key == "targets":
            targets.update(val)
        elif key == "options":
            options.update(val)
        elif key == "layer":
            if spec.model in ("ou-demo", "qubit-only"):
                raise ValueError(f"preset {name!r} has no protection layers")
            kw["layers"] = (int(val),)
        elif key == "tau":
            if spec.model not in ("ou-demo", "qubit-only"):
                raise ValueError("tau applies to the ou-demo, coherence and ccd-demo presets")
            noise["tau_m"] = float(val)
        elif key == "noiseless":
            if val:
                noise["dephasing_on"] = False
                noise["amplitude_on"] = False
        elif key in _SPEC_FIELDS:
            if key in ("layers", "initial_states", "drives"):
                val = tuple(val) if isinstance(val, (list, tuple)) else (val,)
            kw[key] = val
        else:
            raise ValueError(f"unknown override {key!r}")
    return replace(spec, noise=NoiseBlock(**noise), targets=targets, options=options, **kw)


# --- ensemble plumbing ----------------------------------------------------------------

def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("RABI_CCD_WORKERS", "1") or 1)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return workers


def _blocks(n: int, workers: int) -> list[tuple[int, int]]:
    size = math.ceil(n / workers)
    return [(a, min(n, a + size)) for a in range(0, n, size)]


def _map_blocks(fn, n: int, workers: int, *args):
    """Run ``fn(lo, hi, *args)`` over contiguous trajectory blocks; concatenate along axis 0."""
    blocks = _blocks(n, workers)
    if workers == 1 or len(blocks) == 1:
        parts = [fn(lo, hi, *args) for lo, hi in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(fn, lo, hi, *args) for lo, hi in blocks]
            parts = [f.result() for f in futs]
    return np.concatenate(parts, axis=0)


class _TargetFrame:
    """Simulation picture -> target picture map at time t (picklable)."""

    def __init__(self, model, layer, params):
        self.model, self.layer, self.params = model, layer, params

    def __call__(self, t):
        spin, rate = frame_factors(self.model, self.layer, t, self.params)
        N = self._N
        return spin.conj().T, np.exp(-1j * rate * np.arange(N))

    def bind(self, N):
        self._N = N
        return self


class _Recorder:
    """Fidelity against reference states plus expectation values."""

    def __init__(self, times, refs, operators, affine=None):
        self.times = np.asarray(times)
        self.refs = refs                  # (n_rec, D) or None
        self.operators = operators        # list of (D, D)
        self.affine = affine or [(1.0, 0.0)] * len(operators)

    def __call__(self, psi, t):
        i = int(np.argmin(np.abs(self.times - t)))
        cols = []
        if self.refs is not None:
            cols.append(batch_fidelity(psi, self.refs[i]))
        for (a, b), op in zip(self.affine, self.operators):
            cols.append(a * batch_expectation(psi, op) + b)
        return np.stack(cols, axis=1) if cols else np.zeros((len(psi), 0))


def _layer_block(lo, hi, config, ops_n, psi0, plan, seeds, recorder, frame):
    ops = build_operator_set(ops_n)
    _, vals = evolve_layer_ensemble(config, ops, psi0, plan, seeds[lo:hi], recorder, frame.bind(ops_n),
                                    indices=range(lo, hi))
    return vals


def run_layer_ensemble(config, ops: OperatorSet, psi0, plan, seeds, recorder, frame, workers=1,
                       noisy=True) -> np.ndarray:
    """(n_traj, n_rec, n_obs) values; a noiseless config runs once and is replicated."""
    if not noisy or not config.channels:
        one = _layer_block(0, 1, config, ops.n_fock, psi0, plan, seeds, recorder, frame)
        return np.repeat(one, len(seeds), axis=0)
    return _map_blocks(_layer_block, len(seeds), workers, config, ops.n_fock, psi0, plan, list(seeds),
                       recorder, frame)


def _spin_label(label: str, tls: str, perp: str) -> str:
    table = {"up_tls": f"up_{tls}", "down_tls": f"down_{tls}", "up_perp": f"up_{perp}", "down_perp": f"down_{perp}"}
    if label in table:
        return table[label]
    return label


def _static_evolution(H, psi0, times):
    w, U = eigh(H)
    c = U.conj().T @ psi0
    return np.array([U @ (np.exp(-1j * w * t) * c) for t in times])


def _meta(spec: ExperimentSpec, **extra) -> dict:
    from . import __version__
    meta = {"spec": spec.to_dict(), "code_version": __version__}
    meta.update(extra)
    return meta


# --- runners ------------------------------------------------------------------------------

def _run_ou(spec: ExperimentSpec, seeds, workers):
    params = spec.noise.dephasing()
    dt = spec.step()
    n = int(round(spec.t_final / dt))
    stride = max(1, int(round(spec.record_interval / dt)))
    paths = np.stack([generate_realization(params, dt, n + 1, s).samples for s in seeds])[:, ::stride]
    grid = np.arange(n + 1)[::stride] * dt
    mean, se = reduce_trajectories(paths)
    var = paths.var(axis=0, ddof=1) if len(seeds) > 1 else np.zeros_like(mean)
    _, var_th = analytic_moments(grid, params)
    sigma = np.sqrt(var_th)
    obs = {"x": (mean, se), "var_x": (var, np.zeros_like(var)), "var_analytic": (var_th, np.zeros_like(var)),
           "sigma_analytic": (sigma, np.zeros_like(var)), "path0": (paths[0], np.zeros_like(var))}
    # spectrum from separate, longer records (realization k of the spectrum uses child seed k as well)
    n_real = int(spec.options.get("spectrum_realizations", 100))
    length = float(spec.options.get("spectrum_length", 0.1))
    m = int(round(length / dt))
    sseeds = trajectory_seeds(spec.master_seed + 1, n_real)
    spaths = np.stack([generate_realization(params, dt, m, s).samples for s in sseeds])
    est = averaged_periodogram(spaths, dt)
    f = est.frequencies
    spec_res = EnsembleResult(f"{spec.name}.spectrum", f, "frequency_hz", ["power", "power_analytic"],
                              {"power": est.power, "power_analytic": spectral_density_analytic(f, params)},
                              {"power": est.power_stderr, "power_analytic": np.zeros_like(f)},
                              n_real, spec.master_seed + 1, sseeds,
                              {"record_length_s": est.record_length, "dt": dt, "window": "rectangular"})
    res = EnsembleResult(spec.name, grid, "time_s", list(obs), {k: v[0] for k, v in obs.items()},
                         {k: v[1] for k, v in obs.items()}, len(seeds), spec.master_seed, seeds,
                         _meta(spec, dt=dt, c=params.c, tau=params.tau), {"spectrum": spec_res},
                         {"x": paths})
    return res


def _qubit_block(lo, hi, seeds, omega, dephasing, dt, n_steps, stride, chunk):
    seeds = seeds[lo:hi]
    nb = len(seeds)
    ar = np.zeros((nb, 2))
    ai = np.zeros((nb, 2))
    ar[:, 0] = ar[:, 1] = 1.0 / math.sqrt(2.0)       # |+x>
    n_rec = n_steps // stride
    out = np.empty((nb, n_rec + 1))
    out[:, 0] = 1.0
    if dephasing is None:
        decay, scale = 1.0, 0.0
        rngs = [None] * nb
        xn = np.zeros(nb)
    else:
        decay, scale = ou_coefficients(dt, dephasing)
        rngs = [channel_rng(s, 0) for s in seeds]
        xn = np.full(nb, dephasing.x0)
    k = 0
    r = 1
    while k < n_steps:
        m = min(chunk, n_steps - k)
        normals = np.zeros((nb, m))
        if dephasing is not None:
            for b in range(nb):
                normals[b] = rngs[b].standard_normal(m)
        _kernels.qubit_chunk(ar, ai, xn, normals, decay, scale, omega, dt, m, stride, out, r)
        k += m
        r += m // stride
    return out


def _run_qubit(spec: ExperimentSpec, seeds, workers):
    deph = spec.noise.dephasing()
    plan = spec.plan()
    stride = plan.output_stride
    chunk = stride * max(1, 20000 // stride)
    grid = plan.record_times
    obs, pert = {}, {}
    for omega in spec.drives:
        vals = _map_blocks(_qubit_block, len(seeds), workers, list(seeds), float(omega), deph, plan.dt,
                           plan.n_steps, stride, chunk)
        name = "sx" if len(spec.drives) == 1 and omega == 0 else f"C_{omega / TWO_PI / 1e3:g}kHz"
        obs[name] = reduce_trajectories(vals)
        pert[name] = vals
    if deph is not None and len(spec.drives) == 1 and spec.drives[0] == 0:
        obs["sx_analytic"] = (analytic_coherence(grid, deph), np.zeros_like(grid))
    meta = _meta(spec, dt=plan.dt, c=None if deph is None else deph.c)
    return EnsembleResult(spec.name, grid, "time_s", list(obs), {k: v[0] for k, v in obs.items()},
                          {k: v[1] for k, v in obs.items()}, len(seeds), spec.master_seed, seeds, meta,
                          per_trajectory=pert)


def _layer_setup(spec, layer, model=None, targets=None, **kw):
    model = model or spec.model
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RWAValidityWarning)
        cfg, params = params_from_targets(model, layer, targets or spec.targets, noise=spec.noise.model(),
                                          omega_a=spec.options.get("omega_a"), **kw)
    return cfg, params


def _run_rabi_like(spec: ExperimentSpec, seeds, workers):
    ops = build_operator_set(spec.n_fock)
    plan = spec.plan()
    grid = plan.record_times
    obs, pert = {}, {}
    meta = _meta(spec, dt=plan.dt, n_fock=spec.n_fock, output_stride=plan.output_stride)
    for label in spec.initial_states:
        ideal_done = False
        for layer in spec.layers:
            cfg, params = _layer_setup(spec, layer)
            tls, perp = params.tls_axis, params.perp_axis
            psi0 = product_state(_spin_label(label, tls, perp), ops.n_fock)
            if spec.model == "rabi":
                H = ideal_rabi_hamiltonian(params, ops)
            else:
                H = ideal_dirac_hamiltonian(params, ops)
            refs = _static_evolution(H, psi0, grid)
            if spec.model == "rabi":
                op, affine, tag = ops.sigma(tls), (0.5, 0.5), "P"
            else:
                op, affine, tag = ops.x, (1.0, 0.0), "X"
            if not ideal_done:
                ideal = batch_expectation(refs, op) * affine[0] + affine[1]
                obs[f"{tag}ideal_{label}"] = (ideal, np.zeros_like(ideal))
                ideal_done = True
            rec = _Recorder(grid, refs, [op], [affine])
            frame = _TargetFrame(spec.model, layer, params)
            vals = run_layer_ensemble(cfg, ops, psi0, plan, seeds, rec, frame, workers, spec.noise.enabled)
            for j, nm in enumerate((f"F{layer}", f"{tag}{layer}")):
                key = f"{nm}_{label}"
                obs[key] = reduce_trajectories(vals[:, :, j])
                pert[key] = vals[:, :, j]
            meta[f"layer{layer}_lasers"] = [asdict(las) for las in cfg.lasers]
    names = list(obs)
    return EnsembleResult(spec.name, grid, "time_s", names, {k: v[0] for k, v in obs.items()},
                          {k: v[1] for k, v in obs.items()}, len(seeds), spec.master_seed, seeds, meta,
                          per_trajectory=pert)


def ideal_quench_sigma(params: RabiParams, ops: OperatorSet, psi0, rtol: float = 1e-10) -> float:
    """<sigma_TLS> at the end of the ideal linear quench (adaptive Runge-Kutta)."""
    H0 = ideal_rabi_hamiltonian(replace(params, lam=0.0, ramp_duration=None), ops)
    B = -params.lam * ops.sigma(params.perp_axis) @ ops.x
    tau = params.ramp_duration

    def rhs(t, y):
        return -1j * (H0 @ y + (t / tau) * (B @ y))

    sol = solve_ivp(rhs, (0.0, tau), np.asarray(psi0, dtype=complex), method="DOP853", rtol=rtol, atol=rtol * 1e-2)
    psi = sol.y[:, -1]
    psi = psi / np.linalg.norm(psi)
    return float(np.vdot(psi, ops.sigma(params.tls_axis) @ psi).real)


def _qpt_point(spec, layer, R, T, seeds, workers, n_fock):
    """Mean and SE of <sigma_TLS>(tau_Q), plus the physical tau_Q, at one (layer, R, T)."""
    w = float(spec.options["omega_mode"][layer]) if isinstance(spec.options["omega_mode"], Mapping) \
        else float(spec.options["omega_mode"])
    tau_units = R * T
    tau_Q = tau_units * TWO_PI / w
    targets = {"R": R, "g": float(spec.targets.get("g", 1.0)), "omega_mode": w}
    while True:
        ops = build_operator_set(n_fock)
        cfg, params = _layer_setup(spec, layer, "qpt", targets, ramp_duration=tau_Q)
        psi0 = product_state(_spin_label("down_tls", params.tls_axis, params.perp_axis), n_fock)
        plan = IntegrationPlan.covering(tau_Q, spec.step(), output_stride=10**12)
        rec = _Recorder(plan.record_times, None, [ops.sigma(params.tls_axis)])
        frame = _TargetFrame("qpt", layer, params)
        try:
            vals = run_layer_ensemble(cfg, ops, psi0, plan, seeds, rec, frame, workers, spec.noise.enabled)
            break
        except TrajectoryError as exc:
            if spec.fock_policy != "adaptive" or "Fock tail" not in str(exc) or 2 * n_fock > spec.n_fock_max:
                raise
            n_fock *= 2
    return vals[:, -1, 0], tau_Q, n_fock, params


def _run_qpt(spec: ExperimentSpec, seeds, workers):
    Rs = [float(r) for r in spec.options["R_values"]]
    Tg = np.asarray(spec.options["T_grid"], dtype=float)
    obs, pert = {}, {}
    meta = _meta(spec, dt=spec.step(), n_fock_used={}, sigma_gs={}, tau_Q_s={})
    gs_cache = {}
    for R in Rs:
        # ground state and ideal curve: the target model depends only on R and g
        w1 = float(spec.options["omega_mode"][1]) if isinstance(spec.options["omega_mode"], Mapping) \
            else float(spec.options["omega_mode"])
        n_gs = spec.n_fock
        while True:
            ops = build_operator_set(n_gs)
            _, base = params_from_targets("rabi", 1, {"R": R, "g": float(spec.targets.get("g", 1.0)), "omega_mode": w1})
            try:
                _, gs = rabi_ground_state(base, ops)
                break
            except TruncationError:
                if 2 * n_gs > spec.n_fock_max:
                    raise
                n_gs *= 2
        s_gs = float(np.vdot(gs, ops.sigma(base.tls_axis) @ gs).real)
        gs_cache[R] = s_gs
        meta["sigma_gs"][f"R{R:g}"] = s_gs
        ideal = []
        for T in Tg:
            p = replace(base, ramp_duration=R * T * TWO_PI / w1)
            psi0 = product_state(_spin_label("down_tls", p.tls_axis, p.perp_axis), n_gs)
            ideal.append(scaling_point(R, R * T, ideal_quench_sigma(p, ops, psi0), s_gs).S)
        obs[f"Sideal_R{R:g}"] = (np.array(ideal), np.zeros(len(Tg)))
    for layer in spec.layers:
        for R in Rs:
            S, SE, sig, sig_se = [], [], [], []
            per = []
            for T in Tg:
                vals, tau_Q, n_used, _ = _qpt_point(spec, layer, R, T, seeds, workers, spec.n_fock)
                m, se = reduce_trajectories(vals)
                sig.append(m)
                sig_se.append(se)
                S.append(scaling_point(R, R * T, m, gs_cache[R]).S)
                SE.append(R ** (2.0 / 3.0) * se)
                per.append(vals)
                meta["n_fock_used"][f"L{layer}_R{R:g}_T{T:.6g}"] = n_used
                meta["tau_Q_s"][f"L{layer}_R{R:g}_T{T:.6g}"] = tau_Q
            obs[f"S{layer}_R{R:g}"] = (np.array(S), np.array(SE))
            obs[f"sigma{layer}_R{R:g}"] = (np.array(sig), np.array(sig_se))
            pert[f"sigma{layer}_R{R:g}"] = np.stack(per, axis=1)
    return EnsembleResult(spec.name, Tg, "T_rescaled", list(obs), {k: v[0] for k, v in obs.items()},
                          {k: v[1] for k, v in obs.items()}, len(seeds), spec.master_seed, seeds, meta,
                          per_trajectory=pert)


def run_ensemble(spec: ExperimentSpec, workers: int | None = None) -> EnsembleResult:
    """Run every trajectory of ``spec`` and reduce in trajectory order.

    ``workers`` (default: ``RABI_CCD_WORKERS`` or 1) only changes
    scheduling; the output is identical for any value.
    """
    workers = resolve_workers(workers)
    seeds = trajectory_seeds(spec.master_seed, spec.n_trajectories)
    if spec.model == "ou-demo":
        return _run_ou(spec, seeds, workers)
    if spec.model == "qubit-only":
        return _run_qubit(spec, seeds, workers)
    if spec.model in ("rabi", "dirac"):
        return _run_rabi_like(spec, seeds, workers)
    if spec.model == "qpt":
        return _run_qpt(spec, seeds, workers)
    raise ValueError(f"unknown model {spec.model!r}")
