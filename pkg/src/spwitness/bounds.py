"""Separable bounds on the witness parameter and the witnessed/not-witnessed verdict.

Methods
-------
``qubit``
    Closed form for states inside the 0/1 photon subspace.
``lossy_sym`` / ``lossy_asym``
    The qubit bound evaluated on the statistics of the lossy delocalized
    photon, with the loss split evenly or placed entirely on one side.
``analytic_multiphoton``
    Closed form valid with multiphoton components, evaluated at the point
    ``p00 = p0A p0B / z``. It is only tight for small two-photon weights; the
    result carries a flag comparing it to the exact one-dimensional maximum.
``pjoint_closed_form``
    Tight bound as a function of ``p_joint`` alone, with an explicit dual
    certificate (``build_certificate``).
``sdp_original`` / ``sdp_enhanced``
    Semidefinite programs over 9x9 real two-mode density matrices. The
    enhanced program constrains every coarse-grained joint probability by
    Frechet inequalities and expresses ``p_joint`` through ``rho``; the
    original one uses only the 0- and 1-photon marginals and ``p*``.

Conventions for the SDPs
------------------------
The witness is bounded by ``tr(M rho) + 2 sqrt(2) p_joint`` where ``M``
couples ``|01><10|`` (weight ``8 / (pi sqrt 2)`` on each side) and
``|02><11|``, ``|20><11|`` (weight ``4 / pi``). ``N`` projects onto the 0/1
subspace so that ``p_joint = 1 - tr(N rho)``. Positivity under partial
transposition is imposed on the 0/1 block of ``partial_transpose_01(rho)``:
that is the condition used to derive the closed forms above, and it is
necessary for separable states. Photon-number levels whose probability is at
most ``LEVEL_DROP_TOL`` are merged into the party's most likely level before
solving, which keeps the feasible set strictly interior-reachable. Moving a
mass ``eps`` that way changes ``tr(W rho)`` by at most
``2 || |W| || sqrt(eps) + eps ||W||``, and that amount is added to the
bound. Every SDP value returned is the dual side, a certified upper bound on
the program's optimum.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import sdp as _sdp
from .sdp import EntryMap, LinearConstraint, SdpProblem

SQRT2 = math.sqrt(2.0)
S_PREFACTOR = 16.0 / (math.pi * SQRT2)
D_WEIGHT = 8.0 / (math.pi * SQRT2)
EF_WEIGHT = 4.0 / math.pi
JOINT_WEIGHT = 2.0 * SQRT2
CUTOFF = 2
LEVEL_DROP_TOL = 1e-30
STATS_TOL = 1e-9
CERT_TOL = 1e-10
STABLE_XMINUS_SQ = 1e-3

METHODS = (
    "qubit",
    "lossy_sym",
    "lossy_asym",
    "analytic_multiphoton",
    "pjoint_closed_form",
    "sdp_original",
    "sdp_enhanced",
)


@dataclass
class BoundResult:
    value: float
    method: str
    certificate: dict | None = None
    inputs: dict = field(default_factory=dict)
    tight: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown bound method {self.method!r}")
        if not self.value >= -1e-12:
            raise ValueError(f"bound value {self.value} is negative")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "value": self.value,
            "tight": self.tight,
            "inputs": self.inputs,
            "certificate": self.certificate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class CertificateData:
    lam: float
    mu: float
    ell: float
    m: float
    A_matrix: np.ndarray
    B_matrix: np.ndarray
    residual_norm: float
    min_eig_A: float
    min_eig_B: float
    p_joint: float
    stable_form: bool = False

    @property
    def value(self) -> float:
        """``lambda + mu (1 - p_joint) + 2 sqrt(2) p_joint``."""
        return self.lam + self.mu * (1.0 - self.p_joint) + JOINT_WEIGHT * self.p_joint

    def ok(self, tol: float = CERT_TOL) -> bool:
        return self.residual_norm <= tol and self.min_eig_A >= -tol and self.min_eig_B >= -tol

    def to_dict(self) -> dict:
        return {
            "p_joint": self.p_joint,
            "lambda": self.lam,
            "mu": self.mu,
            "ell": self.ell,
            "m": self.m,
            "residual_norm": self.residual_norm,
            "min_eig_A": self.min_eig_A,
            "min_eig_B": self.min_eig_B,
            "value": self.value,
            "stable_form": self.stable_form,
            "A_matrix": self.A_matrix.tolist(),
            "B_matrix": self.B_matrix.tolist(),
        }


# -- closed forms ------------------------------------------------------------


def _check_prob(name, p):
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


def qubit_s_max(p0A: float, p0B: float) -> float:
    """Largest ``S`` of any qubit-space state with vacuum probabilities ``p0A``, ``p0B``."""
    _check_prob("p0A", p0A)
    _check_prob("p0B", p0B)
    if p0A + p0B <= 1.0:
        return S_PREFACTOR * math.sqrt(p0A * p0B)
    return S_PREFACTOR * math.sqrt((1.0 - p0A) * (1.0 - p0B))


def qubit_sep_bound(p0A: float, p0B: float) -> BoundResult:
    """Largest ``S`` of a qubit-space state that is PPT."""
    _check_prob("p0A", p0A)
    _check_prob("p0B", p0B)
    value = S_PREFACTOR * math.sqrt(p0A * p0B * (1.0 - p0A) * (1.0 - p0B))
    return BoundResult(value, "qubit", inputs={"p0A": p0A, "p0B": p0B})


def sep_bound_lossy(eta_A: float, eta_B: float) -> float:
    """Qubit bound on the statistics of the delocalized photon after losses."""
    _check_prob("eta_A", eta_A)
    _check_prob("eta_B", eta_B)
    return D_WEIGHT * math.sqrt(eta_A * eta_B * (1.0 - eta_A / 2.0) * (1.0 - eta_B / 2.0))


def sep_bound_lossy_sym(eta_ab: float) -> BoundResult:
    """Loss split evenly: ``eta_A = eta_B = sqrt(eta_ab)``."""
    e = math.sqrt(eta_ab)
    return BoundResult(sep_bound_lossy(e, e), "lossy_sym", inputs={"eta_ab": eta_ab, "eta_A": e, "eta_B": e})


def sep_bound_lossy_asym(eta_ab: float) -> BoundResult:
    """Source next to Alice: ``eta_A = 1``, ``eta_B = eta_ab``."""
    return BoundResult(sep_bound_lossy(1.0, eta_ab), "lossy_asym", inputs={"eta_ab": eta_ab, "eta_A": 1.0, "eta_B": eta_ab})


def _stats_tuple(stats):
    return (float(stats.p0), float(stats.p1), float(stats.p_ge2))


def _check_stats(stats, who):
    p = _stats_tuple(stats)
    if min(p) < -STATS_TOL or max(p) > 1.0 + STATS_TOL or abs(sum(p) - 1.0) > STATS_TOL:
        raise ValueError(
            f"{who} statistics {p} are not a probability distribution; project them first (LocalPhotonStats.clipped)"
        )
    return tuple(min(1.0, max(0.0, v)) for v in p)


def _multiphoton_terms(p0A, p0B, gA, gB, p00):
    q = p00 + 1.0 - p0A - p0B + gA + gB
    d2 = min((p0A - p00) * (p0B - p00), p00 * q)
    return S_PREFACTOR * math.sqrt(max(d2, 0.0)) + 2 * EF_WEIGHT * (math.sqrt(gA) + math.sqrt(gB)) * math.sqrt(max(q, 0.0))


def analytic_multiphoton_bound(stats_A, stats_B) -> BoundResult:
    """Closed-form multiphoton bound with ``p_joint`` replaced by ``p*``.

    The certificate records ``one_dim_max``, the maximum over ``p00`` of the
    underlying per-coherence bounds, and ``regime_ok`` when the closed form
    attains it (within 1e-9); outside that regime the closed form is not a
    valid bound and ``one_dim_max`` should be used.
    """
    p0A, _, gA = _check_stats(stats_A, "Alice")
    p0B, _, gB = _check_stats(stats_B, "Bob")
    z = 1.0 + gA + gB
    p_star = gA + gB
    first = S_PREFACTOR * math.sqrt(max(0.0, p0A * p0B * (1.0 - p0B / z) * (1.0 - p0A / z)))
    second = 2 * EF_WEIGHT * (math.sqrt(gA) + math.sqrt(gB)) * math.sqrt(max(0.0, z + p0A * p0B / z - p0A - p0B))
    value = first + second + JOINT_WEIGHT * p_star

    # Exact 1-D maximum over p00 in [max(0, p0A + p0B - z), min(p0A, p0B)].
    lo = max(0.0, p0A + p0B - 1.0 - gA - gB)
    hi = min(p0A, p0B)
    grid = np.linspace(lo, hi, 2001) if hi > lo else np.array([lo])
    vals = np.array([_multiphoton_terms(p0A, p0B, gA, gB, v) for v in grid])
    k = int(np.argmax(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    # Golden-section refinement of the bracket around the grid maximum.
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    for _ in range(80):
        c = b - inv_phi * (b - a)
        d = a + inv_phi * (b - a)
        if _multiphoton_terms(p0A, p0B, gA, gB, c) >= _multiphoton_terms(p0A, p0B, gA, gB, d):
            b = d
        else:
            a = c
    best = max(float(vals[k]), _multiphoton_terms(p0A, p0B, gA, gB, 0.5 * (a + b))) + JOINT_WEIGHT * p_star
    regime_ok = value >= best - 1e-9
    return BoundResult(
        value,
        "analytic_multiphoton",
        certificate={"p00": p0A * p0B / z, "z": z, "one_dim_max": best, "regime_ok": regime_ok},
        inputs={"stats_A": _stats_tuple(stats_A), "stats_B": _stats_tuple(stats_B), "p_star": p_star},
        tight=False,
    )


def pjoint_closed_form_value(p_joint: float) -> float:
    if not 0.0 <= p_joint <= 0.5:
        raise ValueError(f"closed-form p_joint bound holds for p_joint in [0, 1/2], got {p_joint}")
    xp = math.sqrt(1.0 - p_joint) + math.sqrt(p_joint)
    return JOINT_WEIGHT * (xp * xp / math.pi + p_joint)


def pjoint_closed_form_bound(p_joint: float) -> BoundResult:
    """Tight separable bound given only ``p_joint <= 1/2``.

    For ``p_joint > 0`` the result carries the verified dual certificate;
    at ``p_joint = 0`` the certificate degenerates and the value is the
    qubit bound, which is the limit of the formula.
    """
    value = pjoint_closed_form_value(p_joint)
    cert = None
    if p_joint > 0.0:
        c = build_certificate(p_joint)
        cert = {k: v for k, v in c.to_dict().items() if not k.endswith("_matrix")}
    return BoundResult(value, "pjoint_closed_form", certificate=cert, inputs={"p_joint": p_joint})


# -- certificate -------------------------------------------------------------


def _index(a, b, d=CUTOFF + 1):
    return a * d + b


def witness_matrices(n_max: int = CUTOFF):
    """``(M, N)`` in the two-mode basis ``|n_A n_B>`` (Bob fastest)."""
    if n_max < 2:
        raise ValueError("the multiphoton witness matrices need n_max >= 2")
    d = n_max + 1
    M = np.zeros((d * d, d * d))
    i01, i10, i11 = _index(0, 1, d), _index(1, 0, d), _index(1, 1, d)
    M[i01, i10] = M[i10, i01] = D_WEIGHT
    for i2 in (_index(0, 2, d), _index(2, 0, d)):
        M[i2, i11] = M[i11, i2] = EF_WEIGHT
    N = np.zeros((d * d, d * d))
    for a, b in itertools.product(range(2), range(2)):
        N[_index(a, b, d), _index(a, b, d)] = 1.0
    return M, N


def partial_transpose_01(rho: np.ndarray) -> np.ndarray:
    """Transpose Bob's index inside his 0/1 subspace.

    ``<i j|out|k l> = <i l|rho|k j>`` whenever ``j, l`` are both 0 or 1;
    every other element is copied. The map is an involution.
    """
    rho = np.asarray(rho)
    D = rho.shape[0]
    d = math.isqrt(D)
    if rho.shape != (D, D) or d * d != D:
        raise ValueError(f"expected a square two-mode matrix, got shape {rho.shape}")
    t = rho.reshape(d, d, d, d).copy()
    src = rho.reshape(d, d, d, d)
    t[:, :2, :, :2] = src[:, :2, :, :2].transpose(0, 3, 2, 1)
    return t.reshape(D, D)


def build_certificate(p_joint: float) -> CertificateData:
    """Dual certificate ``(A, B, lambda, mu)`` proving the closed-form ``p_joint`` bound.

    It satisfies ``A + PT(B) - mu N - lambda I + M = 0`` with ``A, B >= 0``,
    where ``PT = partial_transpose_01``. Close to ``p_joint = 1/2`` the factor
    ``x_- = sqrt(1 - p) - sqrt(p)`` vanishes and the literal expressions
    divide zero by zero; there ``lambda + mu - ell`` is replaced by the
    identical ``(lambda + mu) x_-^2 / x_+^2``.
    """
    p = float(p_joint)
    if not 0.0 < p <= 0.5:
        if p == 0.0:
            raise ValueError("p_joint = 0: the certificate diverges; use the qubit bound (pjoint_closed_form_bound(0))")
        raise ValueError(f"certificate exists for 0 < p_joint <= 1/2, got {p}")
    xp = math.sqrt(1.0 - p) + math.sqrt(p)
    xm = math.sqrt(1.0 - p) - math.sqrt(p)
    lam = (2.0 / math.pi) * math.sqrt(2.0 / p) * xp
    mu = ((2.0 / math.pi) * SQRT2 * xp * xp - lam) / (1.0 - p)
    ell = 8.0 * math.sqrt(2.0 * p) / (math.pi * xp)
    i00, i01, i02, i10, i11, i20 = (_index(0, 0), _index(0, 1), _index(0, 2), _index(1, 0), _index(1, 1), _index(2, 0))

    A = lam * np.eye(9)
    A[i00, i00] = 0.0
    A[i01, i01] = A[i10, i10] = lam + mu
    A[i11, i11] = ell
    A[i02, i11] = A[i11, i02] = A[i20, i11] = A[i11, i20] = -EF_WEIGHT

    B = np.zeros((9, 9))
    stable = xm * xm < STABLE_XMINUS_SQ
    if stable:
        scale = lam + mu
        r = xm / xp
        B[i00, i00] = scale
        B[i00, i11] = B[i11, i00] = -scale * r
        B[i11, i11] = scale * r * r
        m = scale * r - D_WEIGHT
    else:
        scale = lam + mu - ell
        B[i00, i00] = scale * xp * xp / (xm * xm)
        B[i00, i11] = B[i11, i00] = -scale * xp / xm
        B[i11, i11] = scale
        m = (xp / xm) * scale - D_WEIGHT
    A[i01, i10] = A[i10, i01] = m

    M, N = witness_matrices()
    R = A + partial_transpose_01(B) - mu * N - lam * np.eye(9) + M
    return CertificateData(
        lam=lam,
        mu=mu,
        ell=ell,
        m=m,
        A_matrix=A,
        B_matrix=B,
        residual_norm=float(np.linalg.norm(R)),
        min_eig_A=float(np.linalg.eigvalsh(A)[0]),
        min_eig_B=float(np.linalg.eigvalsh(B)[0]),
        p_joint=p,
        stable_form=stable,
    )


# -- SDP programs -----------------------------------------------------------


class _Basis:
    """Product basis of kept photon numbers (levels 0, 1, 2 per party)."""

    def __init__(self, levels_A, levels_B):
        self.levels_A = tuple(levels_A)
        self.levels_B = tuple(levels_B)
        self.pairs = [(a, b) for a in self.levels_A for b in self.levels_B]
        self.index = {pair: k for k, pair in enumerate(self.pairs)}
        self.penalty = 0.0
        self.sqrt_d = np.ones(len(self.pairs))
        self.entry_bound = 1.0

    @property
    def dim(self):
        return len(self.pairs)

    def set_scale(self, u_A, u_B, capped):
        """Work with ``rho = D^1/2 rho~ D^1/2``, ``d_ab = sqrt(u_A[a] u_B[b])``.

        ``u`` bounds each level's probability and ``capped(a, b)`` tells
        whether ``rho_(ab),(ab) <= min(u_A[a], u_B[b])`` is implied by the
        program; then ``rho~`` has unit-bounded diagonal there. The product
        form makes the map a congruence of both ``rho`` and its partial
        transpose, so the cones are unchanged.
        """
        d = np.array([math.sqrt(u_A[a] * u_B[b]) for a, b in self.pairs])
        caps = np.array([min(u_A[a], u_B[b]) if capped(a, b) else 1.0 for a, b in self.pairs])
        self.sqrt_d = np.sqrt(d)
        diag_bound = caps / d
        self.entry_bound = np.sqrt(np.outer(diag_bound, diag_bound))

    def scaled(self, mat):
        return self.sqrt_d[:, None] * mat * self.sqrt_d[None, :]

    def restrict(self, mat9):
        full = [_index(a, b) for a, b in self.pairs]
        return self.scaled(mat9[np.ix_(full, full)])

    def embed(self, mat):
        full = [_index(a, b) for a, b in self.pairs]
        out = np.zeros((9, 9))
        out[np.ix_(full, full)] = mat
        return out

    def pt_block(self) -> EntryMap | None:
        low = [(a, b) for a, b in self.pairs if a < 2 and b < 2]
        if len(low) < 2:
            return None
        rows = np.array([[self.index[(i, l)] for (k, l) in low] for (i, j) in low])
        cols = np.array([[self.index[(k, j)] for (k, l) in low] for (i, j) in low])
        return EntryMap(rows, cols, "pt01_block")

    def projector(self, set_A, set_B):
        diag = np.array([1.0 if (a in set_A and b in set_B) else 0.0 for a, b in self.pairs])
        return self.scaled(np.diag(diag))


ALL_SETS = tuple(s for r in (1, 2, 3) for s in itertools.combinations((0, 1, 2), r))
ORIGINAL_SETS = ((0,), (1,))


def _set_label(s):
    return "all" if len(s) == 3 else "+".join("ge2" if n == 2 else str(n) for n in s)


def frechet_pairs(original: bool = False):
    """Subset pairs constrained by Frechet inequalities (the all-by-all pair is vacuous)."""
    sets = ORIGINAL_SETS if original else ALL_SETS
    return [(a, b) for a in sets for b in sets if not (len(a) == 3 and len(b) == 3)]


def _is_marginal(set_A, set_B) -> bool:
    """Singleton-by-everything pairs; they fix the local photon statistics."""
    return (len(set_A) == 3 and len(set_B) == 1) or (len(set_A) == 1 and len(set_B) == 3)


def _merge_small_levels(upper):
    """Levels to keep and ``(level, mass)`` for those merged into the largest one."""
    target = int(np.argmax(upper))
    kept = [n for n in range(3) if n == target or upper[n] > LEVEL_DROP_TOL]
    merged = [(n, float(upper[n])) for n in range(3) if n not in kept]
    return kept, target, merged


def _scale_weights(u_A, u_B, original: bool):
    """Per-level scales; two-photon rows are unconstrained in the original program."""
    if original:
        u_A = [u_A[0], u_A[1], 1.0]
        u_B = [u_B[0], u_B[1], 1.0]
        return u_A, u_B, lambda a, b: a < 2 and b < 2
    return list(u_A), list(u_B), lambda a, b: True


def _merge_penalty(merged, original: bool) -> float:
    """Upper bound on what merging the given masses can hide from the program."""
    M, N = witness_matrices()
    W = M if original else M - JOINT_WEIGHT * N
    w_abs = np.linalg.norm(np.abs(W), 2)
    w_op = np.linalg.norm(W, 2)
    total = 0.0
    for n, eps in merged:
        if eps <= 0.0:
            continue
        total += 2.0 * w_abs * math.sqrt(eps) + eps * w_op
        if original and n == 2:
            total += JOINT_WEIGHT * eps
    return total


def _base_program(basis, original):
    M9, N9 = witness_matrices()
    M, N = basis.restrict(M9), basis.restrict(N9)
    maps = [EntryMap.identity(basis.dim)]
    pt = basis.pt_block()
    if pt is not None:
        maps.append(pt)
    cons = [LinearConstraint(basis.scaled(np.eye(basis.dim)), "<=", 1.0, label="trace")]
    C = M if original else M - JOINT_WEIGHT * N
    return C, maps, cons


def build_frechet_program(stats_A, stats_B, original: bool = False) -> tuple[SdpProblem, _Basis]:
    """The point-estimate program (enhanced unless ``original``)."""
    pA = _check_stats(stats_A, "Alice")
    pB = _check_stats(stats_B, "Bob")
    merged = []
    probs = []
    levels = []
    for p in (pA, pB):
        kept, target, m = _merge_small_levels(p)
        p = list(p)
        for n, eps in m:
            p[target] += eps
            p[n] = 0.0
        merged += m
        probs.append(tuple(p))
        levels.append(kept)
    pA, pB = probs
    basis = _Basis(*levels)
    basis.penalty = _merge_penalty(merged, original)
    basis.set_scale(*_scale_weights(pA, pB, original))
    C, maps, cons = _base_program(basis, original)
    for set_A, set_B in frechet_pairs(original):
        a = sum(pA[n] for n in set_A)
        b = sum(pB[n] for n in set_B)
        lo, hi = max(0.0, a + b - 1.0), min(a, b)
        if lo > hi + STATS_TOL:
            raise ValueError(f"statistics violate the Frechet relation for ({set_A}, {set_B})")
        # With the marginals fixed and rho >= 0 every other pair is implied:
        # P(S, T) <= P(S, all) = a and P(S, T) = a - P(S, not T) >= a + b - 1.
        # Redundant rows only degrade the dual, so they are left out.
        if not original and not _is_marginal(set_A, set_B):
            continue
        G = basis.projector(set_A, set_B)
        label = f"P({_set_label(set_A)},{_set_label(set_B)})"
        if not G.any():
            continue
        if hi - lo <= 1e-15 or _is_marginal(set_A, set_B):
            cons.append(LinearConstraint(G, "=", 0.5 * (lo + hi), label=label))
            continue
        cons.append(LinearConstraint(G, "<=", hi, label=label + "<="))
        if lo > 0.0:
            cons.append(LinearConstraint(G, ">=", lo, label=label + ">="))
    offset = JOINT_WEIGHT * (pA[2] + pB[2]) if original else JOINT_WEIGHT
    return SdpProblem(C, maps, cons, offset=offset, entry_bound=basis.entry_bound), basis


def build_uncertain_program(stats_A, stats_B, k_sigma: float, original: bool = False) -> tuple[SdpProblem, _Basis]:
    """Program whose local probabilities are box variables ``[p - k sigma, p + k sigma] & [0, 1]``."""
    if k_sigma < 0:
        raise ValueError("k_sigma must be non-negative")
    boxes = {}
    for who, st in (("A", stats_A), ("B", stats_B)):
        p = _stats_tuple(st)
        s = (float(st.sigma0), float(st.sigma1), float(st.sigma_ge2))
        boxes[who] = [(max(0.0, p[n] - k_sigma * s[n]), min(1.0, max(0.0, p[n] + k_sigma * s[n]))) for n in range(3)]
        if sum(lo for lo, _ in boxes[who]) > 1.0 + STATS_TOL or sum(hi for _, hi in boxes[who]) < 1.0 - STATS_TOL:
            raise ValueError(f"party {who}: probability boxes do not contain a normalized distribution")
    levels, merged = {}, []
    for who in boxes:
        kept, target, m = _merge_small_levels([hi for _, hi in boxes[who]])
        for n, eps in m:
            lo, hi = boxes[who][target]
            boxes[who][target] = (lo, min(1.0, hi + eps))
            boxes[who][n] = (0.0, 0.0)
        levels[who] = kept
        merged += m
    basis = _Basis(levels["A"], levels["B"])
    basis.penalty = _merge_penalty(merged, original)
    basis.set_scale(*_scale_weights([hi for _, hi in boxes["A"]], [hi for _, hi in boxes["B"]], original))
    C, maps, cons = _base_program(basis, original)

    box_vars, slot = [], {}
    for who in ("A", "B"):
        for n in levels[who]:
            lo, hi = boxes[who][n]
            slot[(who, n)] = len(box_vars)
            obj = JOINT_WEIGHT if (original and n == 2) else 0.0
            box_vars.append(_sdp.BoxVar(lo, hi, obj, label=f"p{n}{who}"))
    nb = len(box_vars)

    def coeffs(who, subset):
        v = np.zeros(nb)
        for n in subset:
            if (who, n) in slot:
                v[slot[(who, n)]] = 1.0
        return v

    zero = np.zeros((basis.dim, basis.dim))
    for who, levs in levels.items():
        cons.append(LinearConstraint(zero, "=", 1.0, coeffs(who, levs), label=f"norm_{who}"))
    for set_A, set_B in frechet_pairs(original):
        G = basis.projector(set_A, set_B)
        if not G.any():
            continue
        a, b = coeffs("A", set_A), coeffs("B", set_B)
        label = f"P({_set_label(set_A)},{_set_label(set_B)})"
        if not original:
            if _is_marginal(set_A, set_B):
                q = a if len(set_A) == 1 else b
                cons.append(LinearConstraint(G, "=", 0.0, -q, label=label))
            continue
        cons.append(LinearConstraint(G, "<=", 0.0, -a, label=label + "<=A"))
        cons.append(LinearConstraint(G, "<=", 0.0, -b, label=label + "<=B"))
        cons.append(LinearConstraint(G, ">=", -1.0, -(a + b), label=label + ">=A+B-1"))
    offset = 0.0 if original else JOINT_WEIGHT
    return SdpProblem(C, maps, cons, box_vars=box_vars, offset=offset, entry_bound=basis.entry_bound), basis


def build_pjoint_program(p_joint: float) -> SdpProblem:
    """Maximize ``tr(M rho) + 2 sqrt(2) p_joint`` given only ``tr(N rho) = 1 - p_joint``."""
    _check_prob("p_joint", p_joint)
    basis = _Basis((0, 1, 2), (0, 1, 2))
    M, N = witness_matrices()
    cons = [
        LinearConstraint(np.eye(9), "<=", 1.0, label="trace"),
        LinearConstraint(N, "=", 1.0 - p_joint, label="p_joint"),
    ]
    return SdpProblem(M, [EntryMap.identity(9), basis.pt_block()], cons, offset=JOINT_WEIGHT * p_joint)


def _solve_bound(problem, method, inputs, basis=None) -> BoundResult:
    sol = _sdp.solve_or_raise(problem)
    cert = {
        "status": sol.status,
        "iterations": sol.iterations,
        "primal_value": sol.primal_value,
        "dual_value": sol.dual_value,
        "gap": sol.gap,
        "stationarity": sol.report.stationarity,
        "stationarity_box": sol.report.stationarity_box,
        "min_eigs": sol.report.min_eigs,
        "sign_violation": sol.report.sign_violation,
    }
    value = sol.dual_value
    if basis is not None:
        cert["levels_A"] = list(basis.levels_A)
        cert["levels_B"] = list(basis.levels_B)
        cert["merge_penalty"] = basis.penalty
        value += basis.penalty
    return BoundResult(max(value, 0.0), method, certificate=cert, inputs=inputs)


def sdp_pjoint_bound(p_joint: float) -> BoundResult:
    """SDP counterpart of ``pjoint_closed_form_bound``."""
    return _solve_bound(build_pjoint_program(p_joint), "pjoint_closed_form", {"p_joint": p_joint, "solver": "sdp"})


def sdp_enhanced_bound(stats_A, stats_B) -> BoundResult:
    problem, basis = build_frechet_program(stats_A, stats_B, original=False)
    inputs = {"stats_A": _stats_tuple(stats_A), "stats_B": _stats_tuple(stats_B)}
    return _solve_bound(problem, "sdp_enhanced", inputs, basis)


def sdp_original_bound(stats_A, stats_B) -> BoundResult:
    problem, basis = build_frechet_program(stats_A, stats_B, original=True)
    inputs = {"stats_A": _stats_tuple(stats_A), "stats_B": _stats_tuple(stats_B)}
    return _solve_bound(problem, "sdp_original", inputs, basis)


def bound_with_uncertainties(stats_A, stats_B, k_sigma: float, method: str = "sdp_enhanced") -> BoundResult:
    """Worst case of an SDP bound over local probabilities within ``k_sigma`` standard errors.

    Each probability becomes a variable in ``[p - k sigma, p + k sigma]``
    clipped to ``[0, 1]``; each party's probabilities must sum to one, and
    the Frechet inequalities are imposed linearly in ``rho`` and in these
    variables.
    """
    if method not in ("sdp_enhanced", "sdp_original"):
        raise ValueError(f"uncertainty handling is available for the SDP bounds, not {method!r}")
    problem, basis = build_uncertain_program(stats_A, stats_B, k_sigma, original=method == "sdp_original")
    inputs = {
        "stats_A": _stats_tuple(stats_A),
        "stats_B": _stats_tuple(stats_B),
        "sigmas_A": list(stats_A.sigmas),
        "sigmas_B": list(stats_B.sigmas),
        "k_sigma": k_sigma,
    }
    return _solve_bound(problem, method, inputs, basis)


def pjoint_certificate_multipliers(cert: CertificateData) -> _sdp.DualCertificate:
    """Express a closed-form certificate as multipliers of ``build_pjoint_program``."""
    low = [_index(a, b) for a in range(2) for b in range(2)]
    return _sdp.DualCertificate(
        cones=[cert.A_matrix, cert.B_matrix[np.ix_(low, low)]],
        linear=np.array([cert.lam, cert.mu]),
    )


def compute_bound(method: str, stats_A=None, stats_B=None, eta_ab: float | None = None, k_sigma: float = 0.0) -> BoundResult:
    """Dispatch on a method tag; the inputs each method needs must be provided."""
    if method in ("lossy_sym", "lossy_asym"):
        if eta_ab is None:
            raise ValueError(f"{method} needs eta_ab")
        return sep_bound_lossy_sym(eta_ab) if method == "lossy_sym" else sep_bound_lossy_asym(eta_ab)
    if stats_A is None or stats_B is None:
        raise ValueError(f"{method} needs local statistics for both parties")
    if method == "qubit":
        return qubit_sep_bound(_check_stats(stats_A, "Alice")[0], _check_stats(stats_B, "Bob")[0])
    if method == "analytic_multiphoton":
        return analytic_multiphoton_bound(stats_A, stats_B)
    if method == "pjoint_closed_form":
        p = _check_stats(stats_A, "Alice")[2] + _check_stats(stats_B, "Bob")[2]
        result = pjoint_closed_form_bound(p)
        result.inputs["p_star"] = p
        return result
    if method in ("sdp_enhanced", "sdp_original"):
        if k_sigma > 0:
            return bound_with_uncertainties(stats_A, stats_B, k_sigma, method)
        return sdp_enhanced_bound(stats_A, stats_B) if method == "sdp_enhanced" else sdp_original_bound(stats_A, stats_B)
    raise ValueError(f"unknown bound method {method!r}; choose from {METHODS}")


def verdict(witness, bound: BoundResult, k_sigma: float = 3.0) -> str:
    """``witnessed`` iff ``S - k_sigma * SE`` strictly exceeds the bound."""
    return "witnessed" if witness.s - k_sigma * witness.se > bound.value else "not_witnessed"
