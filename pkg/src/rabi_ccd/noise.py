"""Ornstein-Uhlenbeck noise: exact sampling and analytic predictors.

The OU process is used for the magnetic-field (dephasing) fluctuation
``delta_m(t)`` and for the relative laser-intensity fluctuations
``delta_Omega(t)``.  Every sampler in this module advances the process with
the exact update

    X(t + dt) = X(t) exp(-dt/tau) + sqrt(c tau / 2 (1 - exp(-2 dt/tau))) N

so any grid spacing is admissible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .seeding import trajectory_seeds


@dataclass(frozen=True)
class OUParams:
    """Parameters of a zero-mean OU process.

    Attributes
    ----------
    tau : float
        Correlation time [s].
    c : float
        Diffusion constant [units^2 / s].
    x0 : float
        Initial value.  Ignored when ``stationary`` is set.
    stationary : bool
        Draw the initial value from the stationary law N(0, c tau / 2)
        instead of starting at ``x0``.  Off for all paper presets.
    """

    tau: float
    c: float
    x0: float = 0.0
    stationary: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be positive and finite, got {self.tau!r}")
        if not (math.isfinite(self.c) and self.c >= 0):
            raise ValueError(f"c must be non-negative and finite, got {self.c!r}")
        if not math.isfinite(self.x0):
            raise ValueError("x0 must be finite")

    @property
    def stationary_variance(self) -> float:
        return 0.5 * self.c * self.tau

    @property
    def crossover_frequency(self) -> float:
        """Half-power frequency 1/(2 pi tau) [Hz]."""
        return 1.0 / (2.0 * math.pi * self.tau)


@dataclass(frozen=True)
class NoiseRealization:
    """One sampled OU path on a uniform grid ``t_k = k dt``."""

    dt: float
    samples: np.ndarray
    params: OUParams
    seed: int | None = None

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.samples))

    @property
    def record_length(self) -> float:
        return self.dt * len(self.samples)


@dataclass(frozen=True)
class SpectralEstimate:
    frequencies: np.ndarray
    power: np.ndarray
    record_length: float
    n_averaged: int = 1
    power_stderr: np.ndarray | None = field(default=None, compare=False)


def ou_coefficients(dt: float, params: OUParams) -> tuple[float, float]:
    """Return ``(decay, scale)`` of the exact update for step ``dt``."""
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive and finite, got {dt!r}")
    decay = math.exp(-dt / params.tau)
    scale = math.sqrt(0.5 * params.c * params.tau * -math.expm1(-2.0 * dt / params.tau))
    return decay, scale


def ou_step(x, dt: float, params: OUParams, gaussian_draw):
    """Advance the process by ``dt`` given a standard-normal draw.

    Works elementwise on arrays.  Non-finite inputs are rejected.
    """
    x_arr = np.asarray(x, dtype=float)
    g_arr = np.asarray(gaussian_draw, dtype=float)
    if not (np.all(np.isfinite(x_arr)) and np.all(np.isfinite(g_arr))):
        raise ValueError("ou_step received a non-finite process value or draw")
    decay, scale = ou_coefficients(dt, params)
    out = x_arr * decay + scale * g_arr
    return float(out) if out.ndim == 0 else out


def initial_value(params: OUParams, rng: np.random.Generator | None = None) -> float:
    if params.stationary:
        if rng is None:
            raise ValueError("a stationary start needs an RNG")
        return float(np.sqrt(params.stationary_variance) * rng.standard_normal())
    return params.x0


def ou_path(x0: float, decay: float, scale: float, draws: np.ndarray) -> np.ndarray:
    """Run the exact recursion over ``draws``; returns ``len(draws) + 1`` values.

    Vectorized over leading axes (the recursion runs along the last axis).
    """
    draws = np.asarray(draws, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    zi = (decay * x0)[..., None]
    body, _ = lfilter([scale], [1.0, -decay], draws, axis=-1, zi=zi)
    return np.concatenate([np.broadcast_to(x0, draws.shape[:-1])[..., None], body], axis=-1)


def generate_realization(params: OUParams, dt: float, n_samples: int, seed: int) -> NoiseRealization:
    """Sample ``n_samples`` grid values starting at ``t = 0``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    x0 = initial_value(params, rng)
    decay, scale = ou_coefficients(dt, params)
    draws = rng.standard_normal(n_samples - 1)
    return NoiseRealization(dt=dt, samples=ou_path(x0, decay, scale, draws), params=params, seed=seed)


def ou_chains(params: OUParams, dt: float, n_steps: int, n_chains: int, master_seed: int) -> np.ndarray:
    """Independent chains, shape ``(n_chains, n_steps + 1)``.

    Chain ``k`` is exactly ``generate_realization(..., seed=trajectory_seeds(master_seed, n)[k])``.
    """
    seeds = trajectory_seeds(master_seed, n_chains)
    return np.stack([generate_realization(params, dt, n_steps + 1, int(s)).samples for s in seeds])


# --- analytic predictors ---------------------------------------------------

def _phase_bracket(y):
    """y + 2 expm1(-y) - expm1(-2y)/2, i.e. t/tau - (3/2 - 2e^-y + e^-2y/2).

    Cancels catastrophically for small y, so a series is used there.
    """
    y = np.asarray(y, dtype=float)
    direct = y + 2.0 * np.expm1(-y) - 0.5 * np.expm1(-2.0 * y)
    series = np.zeros_like(y)
    term = np.ones_like(y)
    small = np.minimum(y, 0.05)      # the series is only used below 0.05
    for n in range(1, 16):
        term = term * small / n
        if n >= 3:
            series = series + (-1) ** n * (2.0 - 2.0 ** (n - 1)) * term
    return np.where(y < 0.05, series, direct)


def analytic_moments(t, params: OUParams):
    """Mean and variance of X(t) started at ``x0`` (not stationary)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    mean = params.x0 * np.exp(-t / params.tau)
    var = params.stationary_variance * -np.expm1(-2.0 * t / params.tau)
    if mean.ndim == 0:
        return float(mean), float(var)
    return mean, var


def phase_variance(t, params: OUParams):
    """Second moment of the accumulated phase int_0^t X(s) ds for X(0) = 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    return params.c * params.tau ** 3 * _phase_bracket(t / params.tau)


def analytic_coherence(t, params: OUParams):
    """<sigma_x(t)> for |+x> under (X(t)/2) sigma_z, averaged over the noise."""
    out = np.exp(-0.5 * phase_variance(t, params))
    return float(out) if np.ndim(out) == 0 else out


def diffusion_from_T2(tau: float, T2: float) -> float:
    """Diffusion constant giving <sigma_x(T2)> = 1/e for correlation time ``tau``.

    Evaluated with the exp(2 T2 / tau) factor divided out so that tau << T2
    does not overflow.
    """
    if not (tau > 0 and T2 > 0):
        raise ValueError("tau and T2 must be positive")
    ratio = T2 / tau
    bracket = float(_phase_bracket(ratio))
    denom = tau ** 3 * bracket
    c = 2.0 / denom if denom > 0 else math.inf
    if not math.isfinite(c) or bracket <= 0:
        raise OverflowError(f"diffusion constant overflows for T2/tau = {ratio:.6g} (tau = {tau:g} s)")
    return c


def spectral_density_analytic(f, params: OUParams):
    """Two-sided power spectral density c tau^2 / (1 + 4 pi^2 tau^2 f^2)."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("f must be >= 0")
    out = params.c * params.tau ** 2 / (1.0 + (2.0 * np.pi * params.tau * f) ** 2)
    return float(out) if out.ndim == 0 else out


def periodogram(realization, dt: float | None = None, times=None) -> SpectralEstimate:
    """Rectangular-window periodogram ``|P_n|^2 / T``.

    ``P_n = dt * sum_k x_k exp(-2 pi i f_n t_k)`` for the non-negative
    frequencies ``f_n = n / T``; the DC bin is included.

    ``realization`` is a :class:`NoiseRealization` or a 1-D sample array
    together with ``dt`` (or explicit ``times``, which must be uniform).
    """
    if isinstance(realization, NoiseRealization):
        samples, dt = realization.samples, realization.dt
    else:
        samples = np.asarray(realization, dtype=float)
        if times is not None:
            times = np.asarray(times, dtype=float)
            steps = np.diff(times)
            if len(times) != len(samples) or len(steps) == 0:
                raise ValueError("times must match samples and hold >= 2 points")
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
                raise ValueError("periodogram requires a uniform time grid")
            dt = float(steps[0])
        if dt is None:
            raise ValueError("dt or times is required for raw samples")
    if len(samples) < 2:
        raise ValueError("periodogram needs at least 2 samples")
    n = len(samples)
    T = n * dt
    coeffs = dt * np.fft.rfft(samples)
    power = np.abs(coeffs) ** 2 / T
    freqs = np.fft.rfftfreq(n, dt)
    return SpectralEstimate(frequencies=freqs, power=power, record_length=T)


def averaged_periodogram(paths: np.ndarray, dt: float) -> SpectralEstimate:
    """Mean periodogram over the rows of ``paths`` with its standard error."""
    paths = np.atleast_2d(paths)
    n, m = paths.shape
    T = m * dt
    power = np.abs(dt * np.fft.rfft(paths, axis=-1)) ** 2 / T
    mean = power.mean(axis=0)
    se = power.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return SpectralEstimate(np.fft.rfftfreq(m, dt), mean, T, n_averaged=n, power_stderr=se)


def loglog_slope(estimate: SpectralEstimate, f_lo: float, f_hi: float) -> float:
    """Least-squares slope of log(power) against log(f) on ``[f_lo, f_hi]``."""
    f, p = estimate.frequencies, estimate.power
    sel = (f >= f_lo) & (f <= f_hi) & (p > 0)
    if sel.sum() < 3:
        raise ValueError(f"fewer than 3 frequency bins in [{f_lo:g}, {f_hi:g}] Hz")
    slope, _ = np.polyfit(np.log(f[sel]), np.log(p[sel]), 1)
    return float(slope)


def half_power_frequency(estimate: SpectralEstimate, plateau_band: tuple[float, float],
                         bins_per_decade: int = 20) -> float:
    """Frequency where the log-binned spectrum falls to half its low-f plateau."""
    f, p = estimate.frequencies, estimate.power
    lo, hi = plateau_band
    plateau = p[(f >= lo) & (f <= hi)].mean()
    edges = np.logspace(np.log10(lo), np.log10(f[-1]), int(bins_per_decade * np.log10(f[-1] / lo)) + 1)
    centers, levels = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (f >= a) & (f < b)
        if sel.any():
            centers.append(math.sqrt(a * b))
            levels.append(p[sel].mean())
    centers, levels = np.array(centers), np.array(levels)
    below = np.nonzero(levels < 0.5 * plateau)[0]
    below = below[centers[below] > hi]
    if len(below) == 0:
        raise ValueError("spectrum never drops to half power")
    i = below[0]
    if i == 0:
        return float(centers[0])
    # interpolate in log-log between the bracketing bins
    x0, x1 = np.log(centers[i - 1]), np.log(centers[i])
    y0, y1 = np.log(levels[i - 1]), np.log(levels[i])
    y = np.log(0.5 * plateau)
    return float(np.exp(x0 + (y - y0) * (x1 - x0) / (y1 - y0)))
