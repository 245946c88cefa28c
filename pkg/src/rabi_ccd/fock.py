"""Truncated qubit (x) Fock space.

Basis ordering is qubit-major: amplitude index ``q * N + n`` where ``q = 0``
is |up> (sigma_z = +1), ``q = 1`` is |down> and ``n`` is the phonon number.
Position and momentum follow ``x = a + a^dag`` and ``p = i (a^dag - a) / 2``
so that ``[x, p] = i`` away from the top Fock level.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import eigh, expm
from scipy.special import eval_genlaguerre, gammaln


class TruncationError(RuntimeError):
    """Population leaked into the top Fock levels."""


class TruncationWarning(UserWarning):
    pass


PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_SQ2 = 1.0 / math.sqrt(2.0)
SPIN_STATES = {
    "up_z": np.array([1, 0], dtype=complex),
    "down_z": np.array([0, 1], dtype=complex),
    "up_x": np.array([_SQ2, _SQ2], dtype=complex),
    "down_x": np.array([_SQ2, -_SQ2], dtype=complex),
    "up_y": np.array([_SQ2, 1j * _SQ2], dtype=complex),
    "down_y": np.array([_SQ2, -1j * _SQ2], dtype=complex),
}


def _frozen(m: np.ndarray) -> np.ndarray:
    m = np.ascontiguousarray(m)
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class OperatorSet:
    """Dense operators on C^2 (x) C^N, read-only after construction.

    ``mode_*`` hold the N x N phonon factors; the unprefixed names are
    embedded in the full 2N space.
    """

    n_fock: int
    dim: int
    mode_a: np.ndarray
    mode_x: np.ndarray
    mode_p: np.ndarray
    mode_n: np.ndarray
    a: np.ndarray
    adag: np.ndarray
    n: np.ndarray
    x: np.ndarray
    p: np.ndarray
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    sp: np.ndarray
    sm: np.ndarray
    identity: np.ndarray

    def sigma(self, axis: str) -> np.ndarray:
        return {"x": self.sx, "y": self.sy, "z": self.sz}[_axis(axis)]

    @cached_property
    def x_eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and real orthogonal eigenvectors of the truncated x.

        Column signs are fixed so that parity maps column k onto column N-1-k
        with the sign (-1)^n, i.e. ``V[n, N-1-k] = (-1)^n V[n, k]``; the
        propagator relies on this to split even and odd blocks.
        """
        N = self.n_fock
        xv, V = eigh(np.real(self.mode_x))
        xv = 0.5 * (xv - xv[::-1])  # exact symmetry of the spectrum
        sign = (-1.0) ** np.arange(N)
        V = V.copy()
        for k in range(N // 2):
            j = N - 1 - k
            # orient column k by its largest entry, then define its partner
            i = np.argmax(np.abs(V[:, k]))
            if V[i, k] < 0:
                V[:, k] *= -1
            V[:, j] = sign * V[:, k]
        if N % 2:
            m = N // 2
            V[1::2, m] = 0.0
            V[:, m] /= np.linalg.norm(V[:, m])
        return _frozen(xv), _frozen(V)


def _axis(label: str) -> str:
    lab = label.lower().strip().removeprefix("sigma_")
    if lab not in ("x", "y", "z"):
        raise ValueError(f"invalid Pauli axis {label!r}")
    return lab


def build_operator_set(n_fock: int) -> OperatorSet:
    if int(n_fock) != n_fock or n_fock < 2:
        raise ValueError(f"n_fock must be an integer >= 2, got {n_fock!r}")
    N = int(n_fock)
    I2, IN = np.eye(2), np.eye(N)
    a = np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1).astype(complex)
    ad = a.conj().T
    x = a + ad
    p = 1j * (ad - a) / 2
    n = np.diag(np.arange(N, dtype=float)).astype(complex)
    sp = np.array([[0, 1], [0, 0]], dtype=complex)

    def mode(m):
        return np.kron(I2, m)

    def spin(s):
        return np.kron(s, IN)

    return OperatorSet(
        n_fock=N, dim=2 * N,
        mode_a=_frozen(a), mode_x=_frozen(x), mode_p=_frozen(p), mode_n=_frozen(n),
        a=_frozen(mode(a)), adag=_frozen(mode(ad)), n=_frozen(mode(n)),
        x=_frozen(mode(x)), p=_frozen(mode(p)),
        sx=_frozen(spin(PAULI["x"])), sy=_frozen(spin(PAULI["y"])), sz=_frozen(spin(PAULI["z"])),
        sp=_frozen(spin(sp)), sm=_frozen(spin(sp.T.copy())),
        identity=_frozen(np.eye(2 * N, dtype=complex)),
    )


def displacement_matrix(alpha: complex, n_fock: int, method: str = "generator",
                        strict: bool = False) -> np.ndarray:
    """D(alpha) = exp(alpha a^dag - alpha* a) on the truncated mode space.

    ``method="generator"`` exponentiates the truncated anti-Hermitian
    generator (exactly unitary); ``method="laguerre"`` uses the closed-form
    matrix elements of the infinite-dimensional operator, restricted to the
    first ``n_fock`` levels.  The two agree on the low-occupancy block.
    """
    N = int(n_fock)
    if N < 2:
        raise ValueError("n_fock must be >= 2")
    alpha = complex(alpha)
    r2 = abs(alpha) ** 2
    if r2 > N / 4:
        msg = f"|alpha|^2 = {r2:.4g} exceeds n_fock/4 = {N / 4:.4g}; displacement is truncation-limited"
        if strict:
            raise TruncationError(msg)
        warnings.warn(msg, TruncationWarning, stacklevel=2)
    if method == "generator":
        a = np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1)
        return expm(alpha * a.T - np.conj(alpha) * a)
    if method == "laguerre":
        m = np.arange(N)[:, None]
        n = np.arange(N)[None, :]
        lo, hi = np.minimum(m, n), np.maximum(m, n)
        k = hi - lo
        lag = eval_genlaguerre(lo, k, r2)
        norm = np.exp(0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - 0.5 * r2)
        # m >= n: alpha^(m-n); m < n: (-alpha*)^(n-m)
        base = np.where(m >= n, alpha, -np.conj(alpha))
        return norm * lag * np.power(base, k)
    raise ValueError(f"unknown method {method!r}")


def truncation_tail(state: np.ndarray, k: int, n_fock: int | None = None):
    """Population in the top ``k`` Fock levels, summed over the qubit.

    Accepts one state of length 2N or a batch of shape (..., 2N).
    """
    state = np.asarray(state)
    N = n_fock if n_fock is not None else state.shape[-1] // 2
    if state.shape[-1] != 2 * N:
        raise ValueError("state length does not match 2 * n_fock")
    if not 0 < k < N:
        raise ValueError(f"k must satisfy 0 < k < n_fock, got k={k}")
    amp = state.reshape(state.shape[:-1] + (2, N))
    out = np.sum(np.abs(amp[..., N - k:]) ** 2, axis=(-2, -1))
    return float(out) if np.ndim(out) == 0 else out


def fock_state(n: int, n_fock: int) -> np.ndarray:
    if not 0 <= n < n_fock:
        raise ValueError("Fock index out of range")
    v = np.zeros(n_fock, dtype=complex)
    v[n] = 1.0
    return v


def spin_state(label: str) -> np.ndarray:
    """Qubit state from a label such as ``"up_z"`` or ``"down_y"``."""
    try:
        return SPIN_STATES[label].copy()
    except KeyError:
        raise ValueError(f"unknown spin label {label!r}; expected one of {sorted(SPIN_STATES)}") from None


def product_state(spin, n_fock: int, mode=0) -> np.ndarray:
    """|spin> (x) |mode>; ``spin`` is a label or 2-vector, ``mode`` an index or N-vector."""
    s = spin_state(spin) if isinstance(spin, str) else np.asarray(spin, dtype=complex)
    m = fock_state(mode, n_fock) if np.ndim(mode) == 0 else np.asarray(mode, dtype=complex)
    return np.kron(s, m)


def coherent_state(alpha: complex, n_fock: int) -> np.ndarray:
    """D(alpha)|0> from the Poisson amplitudes (normalized on the truncation)."""
    n = np.arange(n_fock)
    logamp = -0.5 * abs(alpha) ** 2 - 0.5 * gammaln(n + 1)
    v = np.exp(logamp) * np.power(complex(alpha), n)
    return v / np.linalg.norm(v)
