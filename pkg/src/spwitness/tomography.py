"""Photon-number statistics from phase-averaged quadrature samples.

Pattern functions
-----------------
For each level ``n`` the estimator kernel is ``f_n = d/dx [psi_n(x) phi_n(x)]``
where ``phi_n`` is the irregular solution of ``y'' = (x^2 - 2n - 1) y`` with
parity opposite to ``psi_n``. With the Wronskian ``psi_n phi_n' - psi_n' phi_n
= 2`` one gets ``int f_n psi_m^2 dx = delta_nm``, so the sample mean of
``f_n(x)`` over phase-averaged data estimates ``p_n`` without assuming a
cutoff. ``phi_n`` is integrated outward from ``x = 0`` (DOP853, rtol 1e-12),
tabulated on ``[-6, 6]`` and cubic-spline interpolated. Outside the table the
kernel is clamped to its edge value (``|f_n(6)| < 0.05``); for states with at
most six photons the resulting bias is below 1e-12.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .homodyne import SampleBatch, hermite_functions

PATTERN_LIMIT = 6.0
PATTERN_POINTS = 2401
MAX_PATTERN_LEVEL = 5
MIN_SAMPLES = 1000
WRONSKIAN = 2.0


@dataclass(frozen=True)
class LocalPhotonStats:
    """Photon-number statistics of one party, coarse-grained to {0, 1, >=2}.

    ``higher`` optionally carries explicitly estimated levels ``p2, p3, ...``
    (``p_ge2`` still aggregates everything from two photons up).
    """

    p0: float
    p1: float
    p_ge2: float
    sigma0: float = 0.0
    sigma1: float = 0.0
    sigma_ge2: float = 0.0
    n_samples: int | None = None
    higher: tuple = field(default=())

    def __post_init__(self):
        total = self.p0 + self.p1 + self.p_ge2
        tol = 1e-9 + 3.0 * math.sqrt(self.sigma0**2 + self.sigma1**2 + self.sigma_ge2**2)
        if abs(total - 1.0) > tol:
            raise ValueError(f"p0 + p1 + p_ge2 = {total} is not 1")
        if min(self.sigma0, self.sigma1, self.sigma_ge2) < 0:
            raise ValueError("standard errors must be non-negative")

    @classmethod
    def exact(cls, populations) -> LocalPhotonStats:
        pops = np.asarray(populations, dtype=float)
        total = pops.sum()
        p0 = float(pops[0])
        p1 = float(pops[1]) if len(pops) > 1 else 0.0
        return cls(p0, p1, float(total - p0 - p1), higher=tuple(float(v) for v in pops[2:]))

    @property
    def probs(self) -> tuple[float, float, float]:
        return (self.p0, self.p1, self.p_ge2)

    @property
    def sigmas(self) -> tuple[float, float, float]:
        return (self.sigma0, self.sigma1, self.sigma_ge2)

    def clipped(self) -> LocalPhotonStats:
        """Project onto the probability simplex (clip negatives, renormalize)."""
        p = np.clip(np.array(self.probs), 0.0, None)
        p = p / p.sum()
        return LocalPhotonStats(*p.tolist(), *self.sigmas, n_samples=self.n_samples)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["higher"] = list(self.higher)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class PStar:
    """Upper bound on the probability that either party holds two or more photons."""

    p_star: float
    p_ge2_A: float
    p_ge2_B: float
    sigma: float = 0.0


def _psi_derivative(psi_rows: np.ndarray, n: int) -> np.ndarray:
    d = -math.sqrt((n + 1) / 2.0) * psi_rows[n + 1]
    if n > 0:
        d = d + math.sqrt(n / 2.0) * psi_rows[n - 1]
    return d


def _irregular_solution(n: int, x: np.ndarray):
    """``phi_n`` and ``phi_n'`` on ``x >= 0`` with Wronskian ``WRONSKIAN``."""
    rows0 = hermite_functions(n + 1, 0.0)
    psi0, dpsi0 = rows0[n], _psi_derivative(rows0, n)
    if n % 2 == 0:
        y0 = [0.0, WRONSKIAN / psi0]
    else:
        y0 = [-WRONSKIAN / dpsi0, 0.0]
    energy = 2 * n + 1
    sol = solve_ivp(
        lambda t, y: [y[1], (t * t - energy) * y[0]],
        (0.0, x[-1]), y0, t_eval=x, method="DOP853", rtol=1e-12, atol=1e-14,
    )
    if not sol.success:
        raise RuntimeError(f"irregular solution for n={n} failed: {sol.message}")
    return sol.y[0], sol.y[1]


@lru_cache(maxsize=None)
def _pattern_splines(n_top: int):
    x_half = np.linspace(0.0, PATTERN_LIMIT, PATTERN_POINTS)
    rows = hermite_functions(n_top + 1, x_half)
    x_full = np.concatenate([-x_half[:0:-1], x_half])
    splines = []
    for n in range(n_top + 1):
        phi, dphi = _irregular_solution(n, x_half)
        f = _psi_derivative(rows, n) * phi + rows[n] * dphi
        # psi_n * phi_n is odd, so f_n is even.
        f_full = np.concatenate([f[:0:-1], f])
        splines.append(CubicSpline(x_full, f_full))
    return tuple(splines)


def pattern_function(n: int, x):
    """Phase-averaged diagonal pattern function ``f_n(x)`` for ``0 <= n <= 5``."""
    if not 0 <= n <= MAX_PATTERN_LEVEL:
        raise ValueError(f"pattern functions are tabulated for 0 <= n <= {MAX_PATTERN_LEVEL}")
    spline = _pattern_splines(MAX_PATTERN_LEVEL)[n]
    xc = np.clip(np.asarray(x, dtype=float), -PATTERN_LIMIT, PATTERN_LIMIT)
    val = spline(xc)
    return float(val) if np.ndim(val) == 0 else val


def estimate_local_probs(samples, party: str = "A", n_levels: int = 3) -> LocalPhotonStats:
    """Pattern-function estimate of one party's photon statistics.

    ``samples`` is a ``SampleBatch`` (all settings are pooled; the global
    phase is uniform so the marginal is phase averaged) or a 1-D array of
    quadratures. ``n_levels - 1`` levels are estimated directly and the rest
    is aggregated into the top bin, whose error uses the sample spread of the
    combined kernel so correlations are accounted for.
    """
    if not 3 <= n_levels <= MAX_PATTERN_LEVEL + 1:
        raise ValueError(f"n_levels must be in [3, {MAX_PATTERN_LEVEL + 1}]")
    x = samples.quadratures(party) if isinstance(samples, SampleBatch) else np.asarray(samples, dtype=float)
    N = x.shape[0]
    if N < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples for a usable estimate, got {N}")
    kernels = np.stack([pattern_function(n, x) for n in range(n_levels - 1)])
    means = kernels.mean(axis=1)
    sig = kernels.std(axis=1, ddof=1) / math.sqrt(N)
    ge2 = 1.0 - means[0] - means[1]
    sig_ge2 = float(np.std(kernels[0] + kernels[1], ddof=1) / math.sqrt(N))
    higher = ()
    if n_levels > 3:
        higher = tuple(float(v) for v in means[2:]) + (float(ge2 - means[2:].sum()),)
    return LocalPhotonStats(float(means[0]), float(means[1]), float(ge2), float(sig[0]), float(sig[1]), sig_ge2, N, higher)


def p_star(stats_A: LocalPhotonStats, stats_B: LocalPhotonStats) -> PStar:
    """``p_ge2^A + p_ge2^B`` with errors added in quadrature."""
    return PStar(
        stats_A.p_ge2 + stats_B.p_ge2,
        stats_A.p_ge2,
        stats_B.p_ge2,
        math.hypot(stats_A.sigma_ge2, stats_B.sigma_ge2),
    )


def true_p_joint(state) -> float:
    """Probability that at least one mode holds two or more photons."""
    d = state.dim
    pops = np.real(np.diag(state.rho)).reshape(d, d)
    return float(pops.sum() - pops[:2, :2].sum())
