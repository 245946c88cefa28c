"""Trapped-ion Hamiltonians for the three protection layers and their targets.

The simulation picture is the interaction picture after the optical RWA:

    H(t) = delta_m(t)/2 sz
           + sum_j Omega_j(t) (1 + dOmega_j(t)) / 2
             [ s+ D(i eta_j e^{i nu t}) e^{i(Delta_j t - phi_j)} + h.c. ]

with ``D`` the exact displacement operator (no Lamb-Dicke expansion and no
vibrational RWA).  The layer builders below map target-model parameters
onto laser settings, and the frame maps relate target-model states to this
picture.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .fock import OperatorSet, PAULI
from .noise import OUParams

TWO_PI = 2.0 * math.pi
NU = TWO_PI * 1.36e6          # trap frequency
ETA = 0.06                     # sideband lasers 1, 2
ETA_CARRIER = 0.01             # carrier lasers a, b
OMEGA_A_LAYER2 = TWO_PI * 200e3

DEPHASING = "delta_m"

LASER_COUNT = {0: 2, 1: 3, 2: 3}


class RWAValidityWarning(UserWarning):
    """Second-layer drive too strong compared with the first carrier."""


@dataclass(frozen=True)
class Envelope:
    """Deterministic amplitude multiplier of a laser.

    kind ``"constant"`` -> 1, ``"cos"`` -> 2 cos(rate t),
    ``"ramp"`` -> t / duration.
    """

    kind: str = "constant"
    rate: float = 0.0
    duration: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "cos", "ramp"):
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if self.kind == "ramp" and not self.duration > 0:
            raise ValueError("ramp envelope needs a positive duration")

    @property
    def code(self) -> int:
        return ("constant", "cos", "ramp").index(self.kind)

    @property
    def parameter(self) -> float:
        return {"constant": 0.0, "cos": self.rate, "ramp": self.duration}[self.kind]

    def __call__(self, t):
        if self.kind == "constant":
            return np.ones_like(np.asarray(t, dtype=float)) if np.ndim(t) else 1.0
        if self.kind == "cos":
            return 2.0 * np.cos(self.rate * t)
        return t / self.duration


@dataclass(frozen=True)
class LaserConfig:
    name: str
    omega: float
    delta: float
    phi: float
    eta: float
    envelope: Envelope = field(default_factory=Envelope)
    amplitude_noise_channel: str | None = None

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError(f"laser {self.name}: omega must be >= 0")
        if self.eta < 0:
            raise ValueError(f"laser {self.name}: eta must be >= 0")


@dataclass(frozen=True)
class LayerConfig:
    layer: int
    lasers: tuple[LaserConfig, ...]
    nu: float = NU
    dephasing: OUParams | None = None
    amplitude_noise: Mapping[str, OUParams] = field(default_factory=dict)
    metadata: Mapping[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.layer not in LASER_COUNT:
            raise ValueError(f"layer must be 0, 1 or 2, got {self.layer!r}")
        object.__setattr__(self, "lasers", tuple(self.lasers))
        if len(self.lasers) != LASER_COUNT[self.layer]:
            raise ValueError(f"layer {self.layer} needs {LASER_COUNT[self.layer]} lasers, got {len(self.lasers)}")
        for las in self.lasers:
            if abs(las.delta) > 2 * self.nu:
                raise ValueError(f"laser {las.name}: |Delta| exceeds 2 nu")
            ch = las.amplitude_noise_channel
            if ch is not None and ch not in self.amplitude_noise:
                raise ValueError(f"laser {las.name} references unknown noise channel {ch!r}")

    @property
    def channels(self) -> tuple[tuple[str, OUParams], ...]:
        """Noise channels in their fixed stream order: dephasing first, then
        amplitude channels in order of first use by the lasers."""
        out = []
        if self.dephasing is not None:
            out.append((DEPHASING, self.dephasing))
        seen = set()
        for las in self.lasers:
            ch = las.amplitude_noise_channel
            if ch is not None and ch not in seen:
                seen.add(ch)
                out.append((ch, self.amplitude_noise[ch]))
        return tuple(out)

    def noiseless(self) -> "LayerConfig":
        lasers = tuple(replace(las, amplitude_noise_channel=None) for las in self.lasers)
        return replace(self, lasers=lasers, dephasing=None, amplitude_noise={})


@dataclass(frozen=True)
class RabiParams:
    """Target quantum Rabi model Omega/2 s_TLS + omega a^dag a - lam s_perp x.

    ``carrier`` is the first-layer carrier Omega_a that defines the extra
    rotating frame of layer 2 (zero otherwise).  ``ramp_duration`` makes the
    coupling rise linearly, lam * t / ramp_duration, as in a quench.
    """

    Omega_tls: float
    omega_mode: float
    lam: float
    tls_axis: str = "z"
    perp_axis: str = "x"
    carrier: float = 0.0
    ramp_duration: float | None = None

    @property
    def R(self) -> float:
        return self.Omega_tls / self.omega_mode

    @property
    def g(self) -> float:
        return 2.0 * self.lam / (self.omega_mode * math.sqrt(self.R))

    def coupling_at(self, t: float | None) -> float:
        if self.ramp_duration is None or t is None:
            return self.lam
        return self.lam * t / self.ramp_duration


@dataclass(frozen=True)
class DiracParams:
    """Target Dirac model c_D p s_perp + m_D c^2 s_TLS."""

    c_D: float
    m_D_c2: float
    tls_axis: str = "z"
    perp_axis: str = "x"
    carrier: float = 0.0

    @property
    def r(self) -> float:
        return self.m_D_c2 / self.c_D


@dataclass(frozen=True)
class NoiseModel:
    """Which OU processes drive a layer; ``None`` switches a source off."""

    dephasing: OUParams | None = None
    amplitude: OUParams | None = None
    correlated_12: bool = True


# --- dense builders ----------------------------------------------------------

def _mode_displacement(eta: float, nu: float, t: float, ops: OperatorSet) -> np.ndarray:
    """D(i eta e^{i nu t}) = E exp(i eta x) E^dag with E = exp(i nu t n)."""
    xv, V = ops.x_eigensystem
    D0 = (V * np.exp(1j * eta * xv)) @ V.T
    ph = np.exp(1j * nu * t * np.arange(ops.n_fock))
    return ph[:, None] * D0 * ph.conj()[None, :]


def _hermitian_check(H: np.ndarray, what: str) -> np.ndarray:
    err = np.max(np.abs(H - H.conj().T))
    scale = max(1.0, np.max(np.abs(H)))
    if err > 1e-12 * scale:
        raise AssertionError(f"{what} is not Hermitian (max deviation {err:.3g})")
    return H


def laser_amplitudes(t: float, config: LayerConfig, noise_snapshot: Mapping[str, float]) -> np.ndarray:
    """Complex couplings c_j = Omega_j env_j (1 + dOmega_j) / 2 e^{i(Delta_j t - phi_j)}."""
    out = np.empty(len(config.lasers), dtype=complex)
    for j, las in enumerate(config.lasers):
        amp = las.omega * las.envelope(t)
        ch = las.amplitude_noise_channel
        if ch is not None:
            if ch not in noise_snapshot:
                raise KeyError(f"noise snapshot lacks channel {ch!r}")
            amp *= 1.0 + noise_snapshot[ch]
        out[j] = 0.5 * amp * np.exp(1j * (las.delta * t - las.phi))
    return out


def build_layer_hamiltonian(t: float, config: LayerConfig, noise_snapshot: Mapping[str, float],
                            ops: OperatorSet) -> np.ndarray:
    """Dense simulation-picture Hamiltonian at time ``t`` for one noise snapshot."""
    N = ops.n_fock
    H = np.zeros((2 * N, 2 * N), dtype=complex)
    if config.dephasing is not None:
        if DEPHASING not in noise_snapshot:
            raise KeyError(f"noise snapshot lacks channel {DEPHASING!r}")
        H += 0.5 * noise_snapshot[DEPHASING] * ops.sz
    block = np.zeros((N, N), dtype=complex)
    for c, las in zip(laser_amplitudes(t, config, noise_snapshot), config.lasers):
        block += c * _mode_displacement(las.eta, config.nu, t, ops)
    H[:N, N:] += block
    H[N:, :N] += block.conj().T
    return _hermitian_check(H, "layer Hamiltonian")


def ideal_rabi_hamiltonian(params: RabiParams, ops: OperatorSet, t: float | None = None) -> np.ndarray:
    """Omega/2 s_TLS + omega n - lam(t) s_perp x; ``t`` only matters for ramps."""
    H = (0.5 * params.Omega_tls * ops.sigma(params.tls_axis)
         + params.omega_mode * ops.n
         - params.coupling_at(t) * ops.sigma(params.perp_axis) @ ops.x)
    return _hermitian_check(H, "Rabi Hamiltonian")


def ideal_dirac_hamiltonian(params: DiracParams, ops: OperatorSet) -> np.ndarray:
    H = params.c_D * ops.sigma(params.perp_axis) @ ops.p + params.m_D_c2 * ops.sigma(params.tls_axis)
    return _hermitian_check(H, "Dirac Hamiltonian")


# --- parameter maps ------------------------------------------------------------

_AXES = {0: ("z", "x"), 1: ("x", "y"), 2: ("y", "x")}


def _channel_map(layer: int, noise: NoiseModel | None) -> tuple[dict, dict]:
    """Laser name -> channel id, and channel id -> OUParams."""
    if noise is None or noise.amplitude is None:
        return {}, {}
    if layer == 2:
        names = {"1": "delta_omega_1", "a": "delta_omega_a", "b": "delta_omega_b"}
    elif noise.correlated_12:
        names = {"1": "delta_omega_12", "2": "delta_omega_12", "a": "delta_omega_a"}
    else:
        names = {"1": "delta_omega_1", "2": "delta_omega_2", "a": "delta_omega_a"}
    return names, {ch: noise.amplitude for ch in set(names.values())}


def params_from_targets(model: str, layer: int, targets: Mapping[str, float], *,
                        nu: float = NU, eta: float = ETA, eta_carrier: float = ETA_CARRIER,
                        omega_a: float | None = None, noise: NoiseModel | None = None,
                        ramp_duration: float | None = None):
    """Laser settings realizing a target model at a given protection layer.

    Parameters
    ----------
    model : {"rabi", "qpt", "dirac"}
        ``"qpt"`` is the Rabi map with linearly ramped sideband lasers; it
        needs ``ramp_duration`` and reads ``targets["g"]`` as the final g.
    targets : mapping
        ``R``, ``g``, ``omega_mode`` for Rabi/QPT; ``r``, ``c_D`` for Dirac.
    omega_a : float, optional
        Layer-2 carrier; defaults to 2 pi x 200 kHz.  Ignored below layer 2.

    Returns
    -------
    (LayerConfig, RabiParams | DiracParams)
    """
    if layer not in (0, 1, 2):
        raise ValueError(f"layer must be 0, 1 or 2, got {layer!r}")
    model = model.lower()
    if model == "qpt":
        if ramp_duration is None or not ramp_duration > 0:
            raise ValueError("qpt needs a positive ramp_duration")
    elif ramp_duration is not None:
        raise ValueError("ramp_duration is only meaningful for the qpt model")
    chan, amp_noise = _channel_map(layer, noise)
    dephasing = noise.dephasing if noise is not None else None
    ramp = Envelope("ramp", duration=ramp_duration) if model == "qpt" else Envelope()
    tls, perp = _AXES[layer]
    Oa2 = OMEGA_A_LAYER2 if omega_a is None else float(omega_a)

    def laser(name, omega, delta, phi, eta_j, envelope=Envelope()):
        return LaserConfig(name, omega, delta, phi, eta_j, envelope, chan.get(name))

    if model in ("rabi", "qpt"):
        R, g, w = float(targets["R"]), float(targets["g"]), float(targets["omega_mode"])
        if not (R > 0 and w > 0 and g >= 0):
            raise ValueError("Rabi targets need R > 0, omega_mode > 0, g >= 0")
        lam = g * w * math.sqrt(R) / 2.0
        Om_tls = R * w
        if layer == 0:
            d1, d2 = (R - 1.0) * w, (R + 1.0) * w
            Om = 2.0 * lam / eta
            lasers = (laser("1", Om, nu + d1, 1.5 * math.pi, eta, ramp),
                      laser("2", Om, -nu + d2, 1.5 * math.pi, eta, ramp))
            carrier = 0.0
        elif layer == 1:
            Om = 2.0 * lam / eta
            # phase 0 on the sidebands gives the -lam s_y x coupling; see notes
            lasers = (laser("1", Om, nu - w, 0.0, eta, ramp),
                      laser("2", Om, -nu + w, 0.0, eta, ramp),
                      laser("a", Om_tls, 0.0, 0.0, eta_carrier))
            carrier = 0.0
        else:
            if Om_tls >= Oa2:
                raise ValueError(f"layer 2 needs Omega_b < Omega_a (Omega_b/Omega_a = {Om_tls / Oa2:.3g})")
            if Om_tls >= Oa2 / 5.0 * (1 - 1e-12):
                warnings.warn(f"Omega_b/Omega_a = {Om_tls / Oa2:.3g} >= 1/5: the second-layer RWA is unreliable",
                              RWAValidityWarning, stacklevel=2)
            Om1 = 4.0 * lam / eta
            lasers = (laser("1", Om1, nu - w, 1.5 * math.pi, eta, ramp),
                      laser("a", Oa2, 0.0, 0.0, eta_carrier),
                      laser("b", Om_tls, 0.0, 0.5 * math.pi, eta_carrier, Envelope("cos", rate=Oa2)))
            carrier = Oa2
        params = RabiParams(Om_tls, w, lam, tls, perp, carrier, ramp_duration)
    elif model == "dirac":
        r, cD = float(targets["r"]), float(targets["c_D"])
        if not (cD > 0 and r >= 0):
            raise ValueError("Dirac targets need c_D > 0 and r >= 0")
        if layer > 0 and r == 0:
            raise ValueError("the massless limit r = 0 cannot be protected at layers 1-2")
        mc2 = r * cD
        if layer == 0:
            Om, delta = cD / eta, 2.0 * mc2
            lasers = (laser("1", Om, nu + delta, math.pi, eta), laser("2", Om, -nu + delta, 0.0, eta))
            carrier = 0.0
        elif layer == 1:
            Om = cD / eta
            lasers = (laser("1", Om, nu, 1.5 * math.pi, eta),
                      laser("2", Om, -nu, 0.5 * math.pi, eta),
                      laser("a", 2.0 * mc2, 0.0, 0.0, eta_carrier))
            carrier = 0.0
        else:
            Ob = 2.0 * mc2
            if Ob >= Oa2:
                raise ValueError(f"layer 2 needs Omega_b < Omega_a (Omega_b/Omega_a = {Ob / Oa2:.3g})")
            if Ob >= Oa2 / 5.0 * (1 - 1e-12):
                warnings.warn(f"Omega_b/Omega_a = {Ob / Oa2:.3g} >= 1/5: the second-layer RWA is unreliable",
                              RWAValidityWarning, stacklevel=2)
            lasers = (laser("1", 2.0 * cD / eta, nu, math.pi, eta),
                      laser("a", Oa2, 0.0, 0.0, eta_carrier),
                      laser("b", Ob, 0.0, 0.5 * math.pi, eta_carrier, Envelope("cos", rate=Oa2)))
            carrier = Oa2
        params = DiracParams(cD, mc2, tls, perp, carrier)
    else:
        raise ValueError(f"unknown model {model!r}")
    meta = {"model": model, "eta": eta, "eta_carrier": eta_carrier, "optical_frequency": "not simulated"}
    config = LayerConfig(layer, lasers, nu, dephasing, amp_noise, meta)
    return config, params


def targets_from_config(model: str, config: LayerConfig) -> dict[str, float]:
    """Invert the table rows: read the target parameters back off the lasers."""
    L = {las.name: las for las in config.lasers}
    layer, nu = config.layer, config.nu
    if model in ("rabi", "qpt"):
        if layer == 0:
            d1, d2 = L["1"].delta - nu, L["2"].delta + nu
            Om_tls, w = 0.5 * (d1 + d2), 0.5 * (d2 - d1)
            lam = L["1"].eta * L["1"].omega / 2.0
        elif layer == 1:
            w, Om_tls = nu - L["1"].delta, L["a"].omega
            lam = L["1"].eta * L["1"].omega / 2.0
        else:
            w, Om_tls = nu - L["1"].delta, L["b"].omega
            lam = L["1"].eta * L["1"].omega / 4.0
        R = Om_tls / w
        return {"R": R, "g": 2.0 * lam / (w * math.sqrt(R)), "omega_mode": w}
    if model == "dirac":
        if layer == 0:
            mc2, cD = 0.5 * (L["1"].delta - nu), L["1"].eta * L["1"].omega
        elif layer == 1:
            mc2, cD = 0.5 * L["a"].omega, L["1"].eta * L["1"].omega
        else:
            mc2, cD = 0.5 * L["b"].omega, 0.5 * L["1"].eta * L["1"].omega
        return {"r": mc2 / cD, "c_D": cD}
    raise ValueError(f"unknown model {model!r}")


# --- frames ---------------------------------------------------------------------

def _spin_rotation_x(angle: float) -> np.ndarray:
    """exp(-i angle sx / 2)."""
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def frame_factors(model: str, layer: int, t: float, params) -> tuple[np.ndarray, np.ndarray]:
    """Frame map as (2x2 spin factor, diagonal of the mode factor).

    The full map is ``kron(spin, diag(mode))``; it takes target-picture
    states into the simulation picture.
    """
    model = model.lower()
    spin = np.eye(2, dtype=complex)
    if model in ("rabi", "qpt"):
        N_phase = params.omega_mode * t
        if layer == 0:
            spin = np.diag(np.exp(1j * 0.5 * params.Omega_tls * t * np.array([1.0, -1.0])))
        elif layer == 2:
            spin = _spin_rotation_x(params.carrier * t)
        return spin, N_phase
    if model == "dirac":
        if layer == 0:
            spin = np.diag(np.exp(1j * params.m_D_c2 * t * np.array([1.0, -1.0])))
        elif layer == 2:
            spin = _spin_rotation_x(params.carrier * t)
        return spin, 0.0
    raise ValueError(f"unknown model {model!r}")


def frame_unitary(model: str, layer: int, t: float, params, ops: OperatorSet) -> np.ndarray:
    spin, rate = frame_factors(model, layer, t, params)
    mode = np.exp(1j * rate * np.arange(ops.n_fock))
    return np.kron(spin, np.diag(mode))


def frame_transform(model: str, layer: int, t: float, state: np.ndarray, params, ops: OperatorSet,
                    inverse: bool = False) -> np.ndarray:
    """Map a target-picture state into the simulation picture (or back with ``inverse``).

    Rabi: layer 0 exp(+i(Omega/2 sz + omega n) t), layer 1 exp(+i omega n t),
    layer 2 exp(-i Omega_a sx t / 2) exp(+i omega n t).  Dirac: layer 0
    exp(+i m c^2 sz t), layer 1 identity, layer 2 exp(-i Omega_a sx t / 2).
    Works on a single state or on rows of a batch.
    """
    spin, rate = frame_factors(model, layer, t, params)
    mode = np.exp(1j * rate * np.arange(ops.n_fock))
    if inverse:
        spin, mode = spin.conj().T, mode.conj()
    st = np.asarray(state, dtype=complex)
    amp = st.reshape(st.shape[:-1] + (2, ops.n_fock)) * mode
    out = np.einsum("ab,...bn->...an", spin, amp)
    return out.reshape(st.shape)


__all__ = [
    "NU", "ETA", "ETA_CARRIER", "OMEGA_A_LAYER2", "DEPHASING", "PAULI",
    "Envelope", "LaserConfig", "LayerConfig", "RabiParams", "DiracParams", "NoiseModel",
    "RWAValidityWarning", "build_layer_hamiltonian", "ideal_rabi_hamiltonian",
    "ideal_dirac_hamiltonian", "params_from_targets", "targets_from_config",
    "frame_factors", "frame_unitary", "frame_transform", "laser_amplitudes",
]
