"""The CHSH-type witness parameter ``S`` from data or from states.

Correlators are means of products of sign-binned quadratures. Their standard
errors use the binomial model ``sqrt((1 - E^2) / N)`` per setting; settings
use disjoint shots, so errors combine in quadrature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fock import LossParams, TwoModeState
from .homodyne import CHSH_PAIRS, CHSH_SIGNS, SETTING_PHASES, SampleBatch

S_QUBIT_PREFACTOR = 16.0 / (math.pi * math.sqrt(2.0))
OUT_OF_SUBSPACE_TOL = 1e-10


def sign_bin(x):
    """``+1`` for ``x >= 0`` and ``-1`` otherwise (zero maps to ``+1``)."""
    if np.ndim(x) == 0:
        if not math.isfinite(x):
            raise ValueError(f"cannot bin non-finite value {x}")
        return 1 if x >= 0 else -1
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot bin non-finite values")
    return np.where(x >= 0, 1, -1)


@dataclass(frozen=True)
class Correlator:
    label: str
    e: float
    se: float
    n: int

    def __post_init__(self):
        if abs(self.e) > 1.0 + 1e-12:
            raise ValueError(f"correlator {self.label} = {self.e} outside [-1, 1]")
        if self.se < 0:
            raise ValueError("standard error must be non-negative")


@dataclass(frozen=True)
class WitnessResult:
    s: float
    se: float
    correlators: tuple = field(default=())

    def __post_init__(self):
        if abs(self.s) > 4.0 + 1e-12:
            raise ValueError(f"|S| = {abs(self.s)} exceeds 4")
        if self.se < 0:
            raise ValueError("standard error must be non-negative")

    @property
    def n_samples(self) -> dict:
        return {c.label: c.n for c in self.correlators}

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "se": self.se,
            "correlators": [{"label": c.label, "e": c.e, "n": c.n} for c in self.correlators],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _correlator(xa, xb, label) -> Correlator:
    n = xa.shape[0]
    e = float(np.mean(sign_bin(xa) * sign_bin(xb)))
    return Correlator(label, e, math.sqrt(max(0.0, 1.0 - e * e) / n), n)


def s_from_samples(batch: SampleBatch) -> WitnessResult:
    """Four-setting estimate ``S = E1 + E2 + E3 - E4``."""
    terms = []
    for a, b in CHSH_PAIRS:
        xa, xb = batch.select(a, b)
        if xa.size == 0:
            raise ValueError(f"batch has no samples for setting pair ({a}, {b})")
        terms.append(_correlator(xa, xb, f"{a},{b}"))
    s = sum(sign * c.e for sign, c in zip(CHSH_SIGNS, terms))
    se = math.sqrt(sum(c.se**2 for c in terms))
    return WitnessResult(float(s), se, tuple(terms))


def s_phase_averaged_from_samples(batch: SampleBatch) -> WitnessResult:
    """``S = 2 E(+pi/4) + 2 E(-pi/4)`` with shots pooled by relative phase.

    Sign-binned correlators of phase-averaged data only contain odd photon
    number transfers, so ``E(delta + pi) = -E(delta)``; pairs whose relative
    phase differs from ``+-pi/4`` by ``pi`` enter with flipped sign.
    """
    pooled = {+1: [], -1: []}
    for a, b in CHSH_PAIRS:
        xa, xb = batch.select(a, b)
        if xa.size == 0:
            raise ValueError(f"batch has no samples for setting pair ({a}, {b})")
        delta = SETTING_PHASES[a] - SETTING_PHASES[b]
        flip = 1.0
        # Fold delta into (-pi/2, pi/2].
        while delta > math.pi / 2 + 1e-12:
            delta -= math.pi
            flip = -flip
        while delta <= -math.pi / 2 + 1e-12:
            delta += math.pi
            flip = -flip
        key = 1 if delta > 0 else -1
        pooled[key].append(flip * sign_bin(xa) * sign_bin(xb))
    terms = []
    for key, label in ((1, "+pi/4"), (-1, "-pi/4")):
        products = np.concatenate(pooled[key])
        n = products.shape[0]
        e = float(products.mean())
        terms.append(Correlator(label, e, math.sqrt(max(0.0, 1.0 - e * e) / n), n))
    s = 2 * terms[0].e + 2 * terms[1].e
    se = 2 * math.hypot(terms[0].se, terms[1].se)
    return WitnessResult(float(s), se, tuple(terms))


def s_exact_qubit(state: TwoModeState) -> float:
    """``S = (16 / (pi sqrt 2)) Re <01|rho|10>`` for states inside the 0/1 qubit space."""
    d = state.dim
    pops = np.real(np.diag(state.rho)).reshape(d, d)
    outside = pops.sum() - pops[:2, :2].sum()
    if outside > OUT_OF_SUBSPACE_TOL:
        raise ValueError(
            f"state has weight {outside:.3e} outside the 0/1 photon subspace; use homodyne.exact_s instead"
        )
    return float(S_QUBIT_PREFACTOR * np.real(state.element((0, 1), (1, 0))))


def s_lossy(eta_A: float, eta_B: float) -> float:
    """Witness value of the ideal delocalized photon after losses ``eta_A``, ``eta_B``."""
    LossParams(eta_A, eta_B)
    return S_QUBIT_PREFACTOR * math.sqrt(eta_A * eta_B) / 2.0
