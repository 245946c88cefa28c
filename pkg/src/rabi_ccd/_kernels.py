"""Compiled inner loops.

Every kernel loops over trajectories outermost and touches only that
trajectory's data, so a trajectory's arithmetic is identical whatever batch
it runs in.  No BLAS calls appear on per-trajectory paths for the same
reason.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

_JIT = dict(cache=True, fastmath=True, nogil=True)
INV_SQRT2 = 1.0 / math.sqrt(2.0)


@nb.njit(inline="always", **_JIT)
def _cos_sinc(y):
    """cos(sqrt(y)) and sin(sqrt(y))/sqrt(y) for y >= 0."""
    if y < 1e-2:
        c = 1.0 - y * (0.5 - y * (1.0 / 24 - y * (1.0 / 720 - y * (1.0 / 40320))))
        s = 1.0 - y * (1.0 / 6 - y * (1.0 / 120 - y * (1.0 / 5040 - y * (1.0 / 362880))))
        return c, s
    w = math.sqrt(y)
    return math.cos(w), math.sin(w) / w


@nb.njit(inline="always", **_JIT)
def _block(a0r, a0i, a1r, a1i, d, fr, fi, dt):
    """exp(-i dt [[d, f], [f*, -d]]) applied to (a0, a1)."""
    y = (d * d + fr * fr + fi * fi) * dt * dt
    c, sc = _cos_sinc(y)
    s = sc * dt
    # new0 = (c - i s d) a0 - i s f a1 ; new1 = -i s f* a0 + (c + i s d) a1
    sd = s * d
    sfr = s * fr
    sfi = s * fi
    n0r = c * a0r + sd * a0i + sfr * a1i + sfi * a1r
    n0i = c * a0i - sd * a0r - sfr * a1r + sfi * a1i
    n1r = c * a1r - sd * a1i + sfr * a0i - sfi * a0r
    n1i = c * a1i + sd * a1r - sfr * a0r - sfi * a0i
    return n0r, n0i, n1r, n1i


@nb.njit(inline="always", **_JIT)
def _block_small(a0r, a0i, a1r, a1i, d, fr, fi, dt):
    """:func:`_block` for (w dt)^2 < 1e-2, branch-free so loops vectorize."""
    y = (d * d + fr * fr + fi * fi) * dt * dt
    c = 1.0 - y * (0.5 - y * (1.0 / 24 - y * (1.0 / 720 - y * (1.0 / 40320))))
    s = dt * (1.0 - y * (1.0 / 6 - y * (1.0 / 120 - y * (1.0 / 5040 - y * (1.0 / 362880)))))
    sd = s * d
    sfr = s * fr
    sfi = s * fi
    n0r = c * a0r + sd * a0i + sfr * a1i + sfi * a1r
    n0i = c * a0i - sd * a0r - sfr * a1r + sfi * a1i
    n1r = c * a1r - sd * a1i + sfr * a0i - sfi * a0r
    n1i = c * a1i + sd * a1r - sfr * a0r - sfi * a0i
    return n0r, n0i, n1r, n1i


@nb.njit(**_JIT)
def layer_chunk(sr, si, xn, normals, decay, scale,
                ker, kei, kor, koi, etr, eti,
                omega, delta, phi, envk, envp, chan, deph,
                dt, k0, nsteps):
    """Advance a batch of trajectories by ``nsteps`` exact-midpoint steps.

    State layout per trajectory and qubit: ``s[:Me]`` even-parity block
    coefficients (pairs first, then the x = 0 vector for odd N), ``s[Me:]``
    odd-parity block coefficients.  ``ker``/``kei`` and ``kor``/``koi`` are
    the transposed free-rotation blocks.  ``xn`` holds the current noise
    values, held across each step and advanced with the exact OU update
    afterwards.
    """
    ntraj = sr.shape[0]
    N = sr.shape[2]
    Mo = N // 2
    Me = N - Mo
    L = omega.shape[0]
    nch = xn.shape[1]
    cr = np.empty(L)
    ci = np.empty(L)
    f = np.empty((4, Mo))       # f_k and its partner's coupling (re, im)
    w = np.empty((4, N))        # qubit 0 re/im, qubit 1 re/im
    t = np.empty((4, Me))
    dt2 = dt * dt
    for b in range(ntraj):
        for i in range(N):
            w[0, i] = sr[b, 0, i]
            w[1, i] = si[b, 0, i]
            w[2, i] = sr[b, 1, i]
            w[3, i] = si[b, 1, i]
        for st in range(nsteps):
            tm = (k0 + st + 0.5) * dt
            csum = 0.0
            for j in range(L):
                env = 1.0
                if envk[j] == 1:
                    env = 2.0 * math.cos(envp[j] * tm)
                elif envk[j] == 2:
                    env = tm / envp[j]
                amp = 0.5 * omega[j] * env
                if chan[j] >= 0:
                    amp *= 1.0 + xn[b, chan[j]]
                th = delta[j] * tm - phi[j]
                cr[j] = amp * math.cos(th)
                ci[j] = amp * math.sin(th)
                csum += abs(amp)
            d = 0.0
            if deph >= 0:
                d = 0.5 * xn[b, deph]
            for k in range(Mo):
                f[0, k] = 0.0
                f[1, k] = 0.0
                f[2, k] = 0.0
                f[3, k] = 0.0
            for j in range(L):
                a_r = cr[j]
                a_i = ci[j]
                for k in range(Mo):
                    er = etr[j, k]
                    ei = eti[j, k]
                    f[0, k] += a_r * er - a_i * ei
                    f[1, k] += a_r * ei + a_i * er
                    f[2, k] += a_r * er + a_i * ei
                    f[3, k] += a_i * er - a_r * ei
            # 2x2 blocks in the x eigenbasis; partners k and N-1-k share a pair:
            # chi_k = (e + o)/sqrt2, chi_k' = (e - o)/sqrt2.  The series path is
            # taken only when every block angle is small (bound from |d| + sum|c_j|).
            small = (d * d + csum * csum) * dt2 < 1e-2
            for k in range(Mo):
                ue0r = w[0, k]
                ue0i = w[1, k]
                ue1r = w[2, k]
                ue1i = w[3, k]
                uo0r = w[0, Me + k]
                uo0i = w[1, Me + k]
                uo1r = w[2, Me + k]
                uo1i = w[3, Me + k]
                if small:
                    p0r, p0i, p1r, p1i = _block_small(INV_SQRT2 * (ue0r + uo0r), INV_SQRT2 * (ue0i + uo0i),
                                                      INV_SQRT2 * (ue1r + uo1r), INV_SQRT2 * (ue1i + uo1i),
                                                      d, f[0, k], f[1, k], dt)
                    m0r, m0i, m1r, m1i = _block_small(INV_SQRT2 * (ue0r - uo0r), INV_SQRT2 * (ue0i - uo0i),
                                                      INV_SQRT2 * (ue1r - uo1r), INV_SQRT2 * (ue1i - uo1i),
                                                      d, f[2, k], f[3, k], dt)
                else:
                    p0r, p0i, p1r, p1i = _block(INV_SQRT2 * (ue0r + uo0r), INV_SQRT2 * (ue0i + uo0i),
                                                INV_SQRT2 * (ue1r + uo1r), INV_SQRT2 * (ue1i + uo1i),
                                                d, f[0, k], f[1, k], dt)
                    m0r, m0i, m1r, m1i = _block(INV_SQRT2 * (ue0r - uo0r), INV_SQRT2 * (ue0i - uo0i),
                                                INV_SQRT2 * (ue1r - uo1r), INV_SQRT2 * (ue1i - uo1i),
                                                d, f[2, k], f[3, k], dt)
                w[0, k] = INV_SQRT2 * (p0r + m0r)
                w[1, k] = INV_SQRT2 * (p0i + m0i)
                w[2, k] = INV_SQRT2 * (p1r + m1r)
                w[3, k] = INV_SQRT2 * (p1i + m1i)
                w[0, Me + k] = INV_SQRT2 * (p0r - m0r)
                w[1, Me + k] = INV_SQRT2 * (p0i - m0i)
                w[2, Me + k] = INV_SQRT2 * (p1r - m1r)
                w[3, Me + k] = INV_SQRT2 * (p1i - m1i)
            if Me > Mo:
                fr = 0.0
                fi = 0.0
                for j in range(L):
                    fr += cr[j]
                    fi += ci[j]
                n0r, n0i, n1r, n1i = _block(w[0, Mo], w[1, Mo], w[2, Mo], w[3, Mo], d, fr, fi, dt)
                w[0, Mo] = n0r
                w[1, Mo] = n0i
                w[2, Mo] = n1r
                w[3, Mo] = n1i
            # free mode rotation, block diagonal in parity, both qubits at once
            _rotate(w, t, ker, kei, 0, Me)
            _rotate(w, t, kor, koi, Me, Mo)
            for c in range(nch):
                xn[b, c] = xn[b, c] * decay[c] + scale[c] * normals[b, c, st]
        for i in range(N):
            sr[b, 0, i] = w[0, i]
            si[b, 0, i] = w[1, i]
            sr[b, 1, i] = w[2, i]
            si[b, 1, i] = w[3, i]


@nb.njit(inline="always", **_JIT)
def _rotate(w, t, kr, ki, off, M):
    """w[:, off:off+M] <- K w[:, off:off+M] for both qubits; ``kr``, ``ki`` hold K^T."""
    for i in range(M):
        t[0, i] = 0.0
        t[1, i] = 0.0
        t[2, i] = 0.0
        t[3, i] = 0.0
    for j in range(M):
        v0r = w[0, off + j]
        v0i = w[1, off + j]
        v1r = w[2, off + j]
        v1i = w[3, off + j]
        for i in range(M):
            a = kr[j, i]
            c = ki[j, i]
            t[0, i] += a * v0r - c * v0i
            t[1, i] += a * v0i + c * v0r
            t[2, i] += a * v1r - c * v1i
            t[3, i] += a * v1i + c * v1r
    for i in range(M):
        w[0, off + i] = t[0, i]
        w[1, off + i] = t[1, i]
        w[2, off + i] = t[2, i]
        w[3, off + i] = t[3, i]


@nb.njit(**_JIT)
def kernel_to_states(sr, si, Q, mode_r, mode_i, spin):
    """psi[q, n] = sum_p spin[q, p] mode[n] sum_j Q[n, j] s[p, j].

    ``mode`` folds the interaction-picture phase and the inverse frame's
    mode phase; ``spin`` is the inverse frame's 2x2 factor.
    """
    ntraj, _, N = sr.shape
    out = np.empty((ntraj, 2 * N), dtype=np.complex128)
    tmp = np.empty((2, N), dtype=np.complex128)
    for b in range(ntraj):
        for p in range(2):
            for n in range(N):
                ar = 0.0
                ai = 0.0
                for j in range(N):
                    ar += Q[n, j] * sr[b, p, j]
                    ai += Q[n, j] * si[b, p, j]
                tmp[p, n] = complex(ar, ai) * complex(mode_r[n], mode_i[n])
        for q in range(2):
            for n in range(N):
                out[b, q * N + n] = spin[q, 0] * tmp[0, n] + spin[q, 1] * tmp[1, n]
    return out


@nb.njit(**_JIT)
def states_to_kernel(psi, Q, mode_r, mode_i):
    """Inverse of :func:`kernel_to_states` without a spin factor."""
    ntraj = psi.shape[0]
    N = psi.shape[1] // 2
    sr = np.empty((ntraj, 2, N))
    si = np.empty((ntraj, 2, N))
    for b in range(ntraj):
        for q in range(2):
            for j in range(N):
                ar = 0.0
                ai = 0.0
                for n in range(N):
                    v = psi[b, q * N + n] * complex(mode_r[n], mode_i[n])
                    ar += Q[n, j] * v.real
                    ai += Q[n, j] * v.imag
                sr[b, q, j] = ar
                si[b, q, j] = ai
    return sr, si


@nb.njit(**_JIT)
def qubit_chunk(ar, ai, xn, normals, decay, scale, omega, dt, nsteps, stride, out, r0):
    """Qubit under x/2 sz + omega/2 sx with a held OU value per step.

    Records <sx> every ``stride`` steps into ``out[:, r0 + m]`` after step
    ``(m + 1) * stride``.
    """
    ntraj = ar.shape[0]
    half = 0.5 * omega
    for b in range(ntraj):
        a0r = ar[b, 0]
        a0i = ai[b, 0]
        a1r = ar[b, 1]
        a1i = ai[b, 1]
        x = xn[b]
        m = r0
        for st in range(nsteps):
            a0r, a0i, a1r, a1i = _block(a0r, a0i, a1r, a1i, 0.5 * x, half, 0.0, dt)
            x = x * decay + scale * normals[b, st]
            if (st + 1) % stride == 0:
                out[b, m] = 2.0 * (a0r * a1r + a0i * a1i)
                m += 1
        ar[b, 0] = a0r
        ai[b, 0] = a0i
        ar[b, 1] = a1r
        ai[b, 1] = a1i
        xn[b] = x


@nb.njit(**_JIT)
def batch_expectation(psi, op):
    """Re <psi_b|op|psi_b> and the imaginary residue, row by row."""
    ntraj, D = psi.shape
    re = np.empty(ntraj)
    im = np.empty(ntraj)
    for b in range(ntraj):
        acc = 0j
        for i in range(D):
            row = 0j
            for j in range(D):
                row += op[i, j] * psi[b, j]
            acc += np.conj(psi[b, i]) * row
        re[b] = acc.real
        im[b] = acc.imag
    return re, im


@nb.njit(**_JIT)
def batch_overlap_abs(psi, ref):
    """|<ref|psi_b>| row by row."""
    ntraj, D = psi.shape
    out = np.empty(ntraj)
    for b in range(ntraj):
        acc = 0j
        for i in range(D):
            acc += np.conj(ref[i]) * psi[b, i]
        out[b] = abs(acc)
    return out


@nb.njit(**_JIT)
def batch_norm_tail(psi, N, k):
    """Squared norm and top-``k`` Fock population of each row."""
    ntraj = psi.shape[0]
    norm = np.empty(ntraj)
    tail = np.empty(ntraj)
    for b in range(ntraj):
        s = 0.0
        t = 0.0
        for q in range(2):
            for n in range(N):
                v = psi[b, q * N + n]
                p = v.real * v.real + v.imag * v.imag
                s += p
                if n >= N - k:
                    t += p
        norm[b] = s
        tail[b] = t
    return norm, tail
