"""Inner loops of the quadrature sampler.

Both backends consume the same pre-drawn uniforms and invert the same
piecewise-linear CDF, so they agree to rounding error.

The joint density of ``(x_A, x_B)`` for a two-mode state is sampled
sequentially: ``x_A`` from its marginal, then ``x_B`` from the conditional
density given ``x_A``. Each one-dimensional density is a quadratic form
``sum_{m<=m'} c_{mm'} psi_m(x) psi_m'(x)`` whose CDF is a fixed linear
combination of tabulated cumulative integrals ``table[g, pair]``.
"""

import math

import numpy as np

from ._accel import njit

INV_PI_QUARTER = math.pi ** -0.25


@njit
def _psi_at(x, d, out):
    out[0] = INV_PI_QUARTER * math.exp(-0.5 * x * x)
    if d > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, d - 1):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1.0)) * out[n - 1]


@njit
def _invert_cdf(coef, table, grid, u):
    G = table.shape[0]
    P = table.shape[1]
    total = 0.0
    for p in range(P):
        total += coef[p] * table[G - 1, p]
    target = u * total
    lo = 0
    hi = G - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        f = 0.0
        for p in range(P):
            f += coef[p] * table[mid, p]
        if f < target:
            lo = mid
        else:
            hi = mid
    f_lo = 0.0
    f_hi = 0.0
    for p in range(P):
        f_lo += coef[p] * table[lo, p]
        f_hi += coef[p] * table[hi, p]
    width = f_hi - f_lo
    frac = 0.5 if width <= 0.0 else (target - f_lo) / width
    return grid[lo] + frac * (grid[hi] - grid[lo])


@njit
def sample_pairs_numba(rho_a, rho4, pair_m, pair_k, table, grid, theta_a, theta_b, u1, u2, out_a, out_b):
    d = rho_a.shape[0]
    P = pair_m.shape[0]
    coef = np.empty(P)
    psi = np.empty(d)
    amp = np.empty(d, dtype=np.complex128)
    K = np.empty((d, d), dtype=np.complex128)
    for s in range(theta_a.shape[0]):
        ta = theta_a[s]
        tb = theta_b[s]
        for p in range(P):
            m = pair_m[p]
            k = pair_k[p]
            if m == k:
                coef[p] = rho_a[m, m].real
            else:
                ph = math.cos(ta * (m - k)) - 1j * math.sin(ta * (m - k))
                coef[p] = 2.0 * (rho_a[m, k] * ph).real
        xa = _invert_cdf(coef, table, grid, u1[s])
        out_a[s] = xa

        _psi_at(xa, d, psi)
        for n in range(d):
            amp[n] = psi[n] * (math.cos(ta * n) - 1j * math.sin(ta * n))
        for m in range(d):
            for k in range(d):
                acc = 0.0 + 0.0j
                for n in range(d):
                    for n2 in range(d):
                        acc += amp[n] * amp[n2].conjugate() * rho4[n, m, n2, k]
                K[m, k] = acc
        for p in range(P):
            m = pair_m[p]
            k = pair_k[p]
            if m == k:
                coef[p] = K[m, m].real
            else:
                ph = math.cos(tb * (m - k)) - 1j * math.sin(tb * (m - k))
                coef[p] = 2.0 * (K[m, k] * ph).real
        out_b[s] = _invert_cdf(coef, table, grid, u2[s])


def _psi_rows(x, d):
    out = np.empty((x.shape[0], d))
    out[:, 0] = INV_PI_QUARTER * np.exp(-0.5 * x * x)
    if d > 1:
        out[:, 1] = np.sqrt(2.0) * x * out[:, 0]
    for n in range(1, d - 1):
        out[:, n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[:, n] - np.sqrt(n / (n + 1.0)) * out[:, n - 1]
    return out


def _invert_cdf_rows(coef, table, grid, u):
    G = table.shape[0]
    total = coef @ table[G - 1]
    target = u * total
    lo = np.zeros(u.shape[0], dtype=np.int64)
    hi = np.full(u.shape[0], G - 1, dtype=np.int64)
    while np.any(hi - lo > 1):
        mid = (lo + hi) // 2
        f = np.einsum("sp,sp->s", coef, table[mid])
        below = f < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    f_lo = np.einsum("sp,sp->s", coef, table[lo])
    f_hi = np.einsum("sp,sp->s", coef, table[hi])
    width = f_hi - f_lo
    safe = np.where(width > 0, width, 1.0)
    frac = np.where(width > 0, (target - f_lo) / safe, 0.5)
    return grid[lo] + frac * (grid[hi] - grid[lo])


def sample_pairs_numpy(rho_a, rho4, pair_m, pair_k, table, grid, theta_a, theta_b, u1, u2, out_a, out_b, chunk=1 << 16):
    d = rho_a.shape[0]
    diag = pair_m == pair_k
    dm = (pair_m - pair_k).astype(float)
    for start in range(0, theta_a.shape[0], chunk):
        sl = slice(start, start + chunk)
        ta, tb = theta_a[sl], theta_b[sl]
        ph = np.exp(-1j * np.outer(ta, dm))
        coef = np.where(diag, 1.0, 2.0) * np.real(rho_a[pair_m, pair_k][None, :] * ph)
        xa = _invert_cdf_rows(coef, table, grid, u1[sl])
        out_a[sl] = xa

        amp = _psi_rows(xa, d) * np.exp(-1j * np.outer(ta, np.arange(d)))
        K = np.einsum("sn,sk,nmkl->sml", amp, amp.conj(), rho4, optimize=True)
        ph = np.exp(-1j * np.outer(tb, dm))
        coef = np.where(diag, 1.0, 2.0) * np.real(K[:, pair_m, pair_k] * ph)
        out_b[sl] = _invert_cdf_rows(coef, table, grid, u2[sl])
