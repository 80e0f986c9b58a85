"""Small dense semidefinite programs with certified dual bounds.

Problems are posed as maximizations over a real symmetric matrix ``rho``
and optional box-bounded scalars ``t``::

    maximize   <C, rho> + c_t . t + offset
    subject to L_j(rho) >= 0          (PSD, L_j an entry-selection map)
               <G_i, rho> + h_i . t  (<=, =, >=)  g_i
               lower <= t <= upper

The solver is an infeasible-start primal-dual interior-point method (HKM
search direction, Mehrotra predictor-corrector) on the Schur-complement KKT
system; it is deterministic. The reported bound is computed from the dual
multipliers only: they are projected onto their cones and the remaining
stationarity residual ``r`` is charged as ``sum |r_k| * max|x_k|`` using an
a-priori bound on the variables, so the returned value is a valid upper
bound on the true optimum whatever the iterate quality.

Tolerances live here: ``FEAS_TOL`` (primal/dual residuals) and ``GAP_TOL``
(absolute duality gap).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

FEAS_TOL = 1e-9
GAP_TOL = 1e-7
DUAL_RESIDUAL_TOL = 1e-8
MAX_ITER = 100
STEP_FRACTION = 0.9
REGULARIZATION = 1e-12
REFINEMENT_STEPS = 2
MAX_DIM = 16
MAX_CONSTRAINTS = 256


class SdpError(RuntimeError):
    """Raised when a solve does not reach the requested accuracy."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True, eq=False)
class EntryMap:
    """Linear map ``rho -> rho[rows, cols]`` onto a square matrix."""

    rows: np.ndarray
    cols: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rows", np.asarray(self.rows, dtype=np.int64))
        object.__setattr__(self, "cols", np.asarray(self.cols, dtype=np.int64))
        if self.rows.shape != self.cols.shape or self.rows.ndim != 2 or self.rows.shape[0] != self.rows.shape[1]:
            raise ValueError("EntryMap index arrays must be square and of equal shape")

    @classmethod
    def identity(cls, n: int) -> EntryMap:
        r, c = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        return cls(r, c, "identity")

    @property
    def out_dim(self) -> int:
        return self.rows.shape[0]

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return rho[self.rows, self.cols]

    def adjoint(self, Z: np.ndarray, n: int) -> np.ndarray:
        out = np.zeros((n, n), dtype=np.result_type(Z, float))
        np.add.at(out, (self.rows, self.cols), Z)
        return 0.5 * (out + out.T)


@dataclass
class LinearConstraint:
    G: np.ndarray
    relation: str
    rhs: float
    box_coeffs: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        if self.relation not in ("<=", "=", ">="):
            raise ValueError(f"relation must be one of <=, =, >=; got {self.relation!r}")
        self.G = np.asarray(self.G, dtype=float)


@dataclass
class BoxVar:
    lower: float
    upper: float
    objective: float = 0.0
    label: str = ""


@dataclass
class SdpProblem:
    """See module docstring.

    ``entry_bound`` must bound ``|rho_ab|`` on the feasible set, either as one
    number or entrywise as an ``(n, n)`` array.
    """

    objective: np.ndarray
    psd_maps: list
    linear_constraints: list
    box_vars: list = field(default_factory=list)
    offset: float = 0.0
    entry_bound: float | np.ndarray = 1.0

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        n = self.dim
        eb = np.asarray(self.entry_bound, dtype=float)
        if eb.ndim == 0:
            self.entry_bound = float(eb)
        elif eb.shape == (n, n):
            self.entry_bound = eb
        else:
            raise ValueError(f"entry_bound must be a scalar or have shape {(n, n)}")
        if np.any(eb < 0) or not np.all(np.isfinite(eb)):
            raise ValueError("entry_bound must be finite and non-negative")
        if self.objective.shape != (n, n) or not np.allclose(self.objective, self.objective.T):
            raise ValueError("objective must be a symmetric square matrix")
        if not self.psd_maps:
            raise ValueError("at least one PSD map is required")
        if not self.linear_constraints:
            raise ValueError("constraint set must be nonempty")
        if n > MAX_DIM or len(self.linear_constraints) > MAX_CONSTRAINTS:
            raise ValueError(f"problem too large for the dense engine (dim {n}, {len(self.linear_constraints)} constraints)")
        nb = len(self.box_vars)
        for con in self.linear_constraints:
            if con.G.shape != (n, n):
                raise ValueError(f"constraint {con.label!r} has shape {con.G.shape}, expected {(n, n)}")
            if con.box_coeffs is not None and len(con.box_coeffs) != nb:
                raise ValueError(f"constraint {con.label!r} has {len(con.box_coeffs)} box coefficients, expected {nb}")
        for m in self.psd_maps:
            if m.rows.size and (m.rows.max() >= n or m.cols.max() >= n):
                raise ValueError(f"PSD map {m.name!r} indexes outside the variable")

    @property
    def dim(self) -> int:
        return self.objective.shape[0]

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "objective": self.objective.tolist(),
            "psd_maps": [{"name": m.name, "rows": m.rows.tolist(), "cols": m.cols.tolist()} for m in self.psd_maps],
            "linear_constraints": [
                {
                    "G": c.G.tolist(),
                    "relation": c.relation,
                    "rhs": c.rhs,
                    "box_coeffs": None if c.box_coeffs is None else list(map(float, c.box_coeffs)),
                    "label": c.label,
                }
                for c in self.linear_constraints
            ],
            "box_vars": [vars(b) for b in self.box_vars],
            "offset": self.offset,
            "entry_bound": np.asarray(self.entry_bound).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SdpProblem:
        return cls(
            objective=np.array(d["objective"]),
            psd_maps=[EntryMap(m["rows"], m["cols"], m.get("name", "")) for m in d["psd_maps"]],
            linear_constraints=[
                LinearConstraint(np.array(c["G"]), c["relation"], c["rhs"],
                                 None if c.get("box_coeffs") is None else np.array(c["box_coeffs"]), c.get("label", ""))
                for c in d["linear_constraints"]
            ],
            box_vars=[BoxVar(**b) for b in d.get("box_vars", [])],
            offset=d.get("offset", 0.0),
            entry_bound=d.get("entry_bound", 1.0),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass
class DualCertificate:
    """Multipliers in the problem's own (maximization) convention.

    ``cones[j]`` is PSD for map ``j``; ``linear[i]`` is ``>= 0`` for ``<=``
    rows, ``<= 0`` for ``>=`` rows and free for equalities; ``box_upper`` and
    ``box_lower`` are ``>= 0``. Feasibility means
    ``C + sum_j L_j^*(Z_j) - sum_i w_i G_i = 0`` and the analogous relation
    for the box variables, which gives ``value <= sum_i w_i g_i + ...``.
    """

    cones: list
    linear: np.ndarray
    box_upper: np.ndarray = field(default_factory=lambda: np.zeros(0))
    box_lower: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {
            "cones": [np.asarray(z).tolist() for z in self.cones],
            "linear": np.asarray(self.linear).tolist(),
            "box_upper": np.asarray(self.box_upper).tolist(),
            "box_lower": np.asarray(self.box_lower).tolist(),
        }


@dataclass
class DualReport:
    stationarity: float
    stationarity_box: float
    min_eigs: list
    sign_violation: float
    raw_bound: float
    bound: float

    @property
    def residual_norm(self) -> float:
        return float(np.hypot(self.stationarity, self.stationarity_box))

    def ok(self, tol: float = 1e-8) -> bool:
        return self.residual_norm <= tol and min(self.min_eigs, default=0.0) >= -tol and self.sign_violation <= tol

    def to_dict(self) -> dict:
        return {
            "stationarity": self.stationarity,
            "stationarity_box": self.stationarity_box,
            "min_eigs": list(self.min_eigs),
            "sign_violation": self.sign_violation,
            "raw_bound": self.raw_bound,
            "bound": self.bound,
        }


@dataclass
class SdpSolution:
    primal_value: float
    dual_value: float
    gap: float
    rho_opt: np.ndarray
    t_opt: np.ndarray
    dual_certificate: DualCertificate
    report: DualReport
    status: str
    iterations: int
    trace: list

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "gap": self.gap,
            "iterations": self.iterations,
            "rho_opt": self.rho_opt.tolist(),
            "t_opt": self.t_opt.tolist(),
            "dual_certificate": self.dual_certificate.to_dict(),
            "report": self.report.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def check_dual_feasibility(problem: SdpProblem, multipliers: DualCertificate) -> DualReport:
    """Verify multipliers without solving: residuals, cone membership, signs, implied bound."""
    n = problem.dim
    if len(multipliers.cones) != len(problem.psd_maps):
        raise ValueError(f"expected {len(problem.psd_maps)} cone multipliers, got {len(multipliers.cones)}")
    w = np.asarray(multipliers.linear, dtype=float)
    if w.shape != (len(problem.linear_constraints),):
        raise ValueError(f"expected {len(problem.linear_constraints)} linear multipliers, got shape {w.shape}")
    nb = len(problem.box_vars)
    up = np.asarray(multipliers.box_upper, dtype=float).reshape(-1) if nb else np.zeros(0)
    lo = np.asarray(multipliers.box_lower, dtype=float).reshape(-1) if nb else np.zeros(0)
    if up.shape != (nb,) or lo.shape != (nb,):
        raise ValueError("box multiplier shapes do not match the box variables")

    # Residuals are reported for the multipliers as given; the bound is computed
    # from a repaired copy (cones shifted to PSD, wrong-sign entries zeroed) so
    # that it stays valid for any input.
    R_raw = problem.objective.copy()
    R = problem.objective.copy()
    min_eigs = []
    for m, Z in zip(problem.psd_maps, multipliers.cones):
        Z = np.asarray(Z, dtype=float)
        if Z.shape != (m.out_dim, m.out_dim):
            raise ValueError(f"cone multiplier for {m.name!r} has shape {Z.shape}, expected {(m.out_dim, m.out_dim)}")
        Z = 0.5 * (Z + Z.T)
        e = float(np.linalg.eigvalsh(Z)[0]) if Z.size else 0.0
        min_eigs.append(e)
        R_raw += m.adjoint(Z, n)
        R += m.adjoint(Z + max(0.0, -e) * np.eye(m.out_dim), n)
    r_box_raw = np.array([b.objective for b in problem.box_vars], dtype=float)
    r_box = r_box_raw.copy()
    raw = problem.offset
    sign_violation = 0.0
    for wi, con in zip(w, problem.linear_constraints):
        if con.relation == "<=":
            sign_violation = max(sign_violation, -wi)
            wr = max(wi, 0.0)
        elif con.relation == ">=":
            sign_violation = max(sign_violation, wi)
            wr = min(wi, 0.0)
        else:
            wr = wi
        R_raw -= wi * con.G
        R -= wr * con.G
        if con.box_coeffs is not None:
            r_box_raw -= wi * np.asarray(con.box_coeffs, dtype=float)
            r_box -= wr * np.asarray(con.box_coeffs, dtype=float)
        raw += wr * con.rhs
    if nb:
        sign_violation = max(sign_violation, float(np.max(-up, initial=0.0)), float(np.max(-lo, initial=0.0)))
        r_box_raw = r_box_raw - up + lo
        up, lo = np.clip(up, 0.0, None), np.clip(lo, 0.0, None)
        r_box = r_box - up + lo
        raw += float(up @ [b.upper for b in problem.box_vars] - lo @ [b.lower for b in problem.box_vars])

    # Every feasible point has |rho_ab| <= entry_bound, so the residual costs at most this much.
    iu = np.triu_indices(n)
    weights = np.where(iu[0] == iu[1], 1.0, 2.0)
    bound_ab = np.broadcast_to(np.asarray(problem.entry_bound, dtype=float), (n, n))
    slack = float(np.sum(weights * np.abs(R[iu]) * bound_ab[iu]))
    box_scale = np.array([max(abs(b.lower), abs(b.upper)) for b in problem.box_vars], dtype=float)
    slack += float(np.sum(np.abs(r_box) * box_scale)) if nb else 0.0
    return DualReport(
        stationarity=float(np.linalg.norm(R_raw)),
        stationarity_box=float(np.linalg.norm(r_box_raw)) if nb else 0.0,
        min_eigs=min_eigs,
        sign_violation=float(sign_violation),
        raw_bound=float(raw),
        bound=float(raw + slack),
    )


class _Compiled:
    """Problem lowered to ``min c.x  s.t.  F_j(x) >= 0, G x - h >= 0, A x = b``."""

    def __init__(self, problem: SdpProblem):
        n = problem.dim
        iu = np.triu_indices(n)
        self.n = n
        self.iu = iu
        n_rho = iu[0].size
        nb = len(problem.box_vars)
        self.n_rho, self.nb = n_rho, nb
        nx = n_rho + nb
        self.nx = nx

        basis = np.zeros((n_rho, n, n))
        basis[np.arange(n_rho), iu[0], iu[1]] = 1.0
        basis[np.arange(n_rho), iu[1], iu[0]] = 1.0
        self.basis = basis

        def rho_coeffs(M):
            return np.einsum("kab,ab->k", basis, M)

        c = np.zeros(nx)
        c[:n_rho] = -rho_coeffs(problem.objective)
        c[n_rho:] = [-b.objective for b in problem.box_vars]
        self.c = c

        self.Fmats = []
        for m in problem.psd_maps:
            F = np.zeros((m.out_dim**2, nx))
            F[:, :n_rho] = np.stack([m(basis[k]).reshape(-1) for k in range(n_rho)], axis=1)
            self.Fmats.append(F)
        self.cone_dims = [m.out_dim for m in problem.psd_maps]

        G_rows, h_vals, A_rows, b_vals = [], [], [], []
        self.lp_origin = []  # (kind, index, factor) so multipliers map back
        self.eq_origin = []
        for i, con in enumerate(problem.linear_constraints):
            a = np.zeros(nx)
            a[:n_rho] = rho_coeffs(con.G)
            if con.box_coeffs is not None:
                a[n_rho:] = con.box_coeffs
            # Unit-norm rows keep multipliers of weakly scaled rows moderate.
            norm = float(np.linalg.norm(a))
            norm = norm if norm > 0.0 else 1.0
            a, rhs = a / norm, con.rhs / norm
            if con.relation == "<=":
                G_rows.append(-a)
                h_vals.append(-rhs)
                self.lp_origin.append(("lin", i, 1.0 / norm))
            elif con.relation == ">=":
                G_rows.append(a)
                h_vals.append(rhs)
                self.lp_origin.append(("lin", i, -1.0 / norm))
            else:
                A_rows.append(a)
                b_vals.append(rhs)
                self.eq_origin.append(("lin", i, 1.0 / norm))
        for j, b in enumerate(problem.box_vars):
            e = np.zeros(nx)
            e[n_rho + j] = 1.0
            if b.upper - b.lower <= 0.0:
                A_rows.append(e)
                b_vals.append(b.lower)
                self.eq_origin.append(("box", j, 1.0))
                continue
            G_rows.append(-e)
            h_vals.append(-b.upper)
            self.lp_origin.append(("up", j, 1.0))
            G_rows.append(e)
            h_vals.append(b.lower)
            self.lp_origin.append(("lo", j, 1.0))
        self.G = np.array(G_rows).reshape(-1, nx)
        self.h = np.array(h_vals, dtype=float)
        self.A_full = np.array(A_rows).reshape(-1, nx)
        self.b_full = np.array(b_vals, dtype=float)

        # Drop dependent equality rows; y_full = U_r @ y_reduced.
        if self.A_full.shape[0]:
            U, sv, Vt = np.linalg.svd(self.A_full, full_matrices=False)
            r = int(np.sum(sv > 1e-10 * max(1.0, sv[0])))
            self.U_r = U[:, :r]
            self.A = sv[:r, None] * Vt[:r]
            self.b = self.U_r.T @ self.b_full
            self.eq_inconsistency = float(np.linalg.norm(self.b_full - self.U_r @ self.b))
        else:
            self.U_r = np.zeros((0, 0))
            self.A = np.zeros((0, nx))
            self.b = np.zeros(0)
            self.eq_inconsistency = 0.0

    def cone_values(self, x):
        return [(F @ x).reshape(k, k) for F, k in zip(self.Fmats, self.cone_dims)]

    def cone_adjoint(self, Zs):
        out = np.zeros(self.nx)
        for F, Z in zip(self.Fmats, Zs):
            out += F.T @ Z.reshape(-1)
        return out


def _sym(M):
    return 0.5 * (M + M.T)


def _max_step_psd(S, dS):
    if S.size == 0:
        return np.inf
    w, V = np.linalg.eigh(S)
    if w[0] <= 0.0:
        return 0.0
    Sih = (V / np.sqrt(w)) @ V.T
    lam = np.linalg.eigvalsh(_sym(Sih @ dS @ Sih))[0]
    return -1.0 / lam if lam < 0 else np.inf


def _max_step_lp(s, ds):
    neg = ds < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-s[neg] / ds[neg]))


def _psd_project(Z):
    w, V = np.linalg.eigh(_sym(Z))
    return (V * np.clip(w, 0.0, None)) @ V.T


def solve(problem: SdpProblem, tol: float = FEAS_TOL, gap_tol: float = GAP_TOL, max_iter: int = MAX_ITER) -> SdpSolution:
    """Solve ``problem``; the returned ``dual_value`` is a certified upper bound.

    ``status`` is ``optimal`` when the primal residual is below ``tol``, the
    dual stationarity residual below ``DUAL_RESIDUAL_TOL`` and the certified
    gap (dual bound minus primal value) below ``gap_tol``; otherwise
    ``max_iter`` or ``infeasible``. Among all iterates the one with the
    smallest certified bound is returned, since late iterations can lose
    dual accuracy to round-off.
    """
    P = _Compiled(problem)
    if P.eq_inconsistency > 1e-9:
        return _finish(problem, P, None, "infeasible", 0, [{"reason": "inconsistent equalities", "residual": P.eq_inconsistency}])

    nx, m, p = P.nx, P.G.shape[0], P.A.shape[0]
    x = np.zeros(nx)
    S = [np.eye(k) for k in P.cone_dims]
    Z = [np.eye(k) for k in P.cone_dims]
    s = np.ones(m)
    z = np.ones(m)
    y = np.zeros(p)
    nu = sum(P.cone_dims) + m
    c_norm = 1.0 + np.linalg.norm(P.c)
    h_norm = 1.0 + np.linalg.norm(P.h) + np.linalg.norm(P.b)
    trace = []
    status = "max_iter"
    it = 0
    best = None
    for it in range(1, max_iter + 1):
        FX = P.cone_values(x)
        rp = [Si - Fi for Si, Fi in zip(S, FX)]
        rpl = s - (P.G @ x - P.h)
        rd = P.cone_adjoint(Z) + P.G.T @ z + P.A.T @ y - P.c
        re = P.A @ x - P.b
        mu = (sum(np.vdot(Si, Zi) for Si, Zi in zip(S, Z)) + s @ z) / nu
        pobj = P.c @ x
        dobj = P.h @ z + P.b @ y
        pinf = np.sqrt(sum(np.sum(r * r) for r in rp) + rpl @ rpl + re @ re) / h_norm
        dinf = np.linalg.norm(rd) / c_norm
        gap = abs(pobj - dobj)
        trace.append({"iter": it, "pobj": -pobj, "dobj": -dobj, "pinf": pinf, "dinf": dinf, "mu": mu})
        certified = _certify(problem, P, Z, z, y)
        cert_gap = certified[1].bound - (-pobj + problem.offset)
        trace[-1].update(bound=certified[1].bound, cert_gap=cert_gap, cert_residual=certified[1].residual_norm)
        if pinf <= tol and (best is None or certified[1].bound < best[2][1].bound):
            best = ((x, Z, z, y), it, certified)
        if pinf <= tol and cert_gap <= gap_tol and certified[1].residual_norm <= DUAL_RESIDUAL_TOL:
            status = "optimal"
            break
        if np.linalg.norm(x) > 1e10 or max((np.abs(Zi).max() for Zi in Z), default=0.0) > 1e12:
            status = "infeasible"
            break

        try:
            Sinv = [np.linalg.inv(Si) for Si in S]
            H = np.zeros((nx, nx))
            for F, Si, Zi in zip(P.Fmats, Sinv, Z):
                H += F.T @ np.kron(Si, Zi) @ F
            H += P.G.T @ ((z / s)[:, None] * P.G)
            H = _sym(H)
            K = np.block([[H, -P.A.T], [P.A, np.zeros((p, p))]])
            # Symmetric diagonal scaling; H grows like 1/mu near the optimum.
            dscale = np.ones(nx + p)
            dscale[:nx] = 1.0 / np.sqrt(np.maximum(np.abs(np.diag(H)), 1.0))
            Ks = dscale[:, None] * K * dscale[None, :]
            # Static regularization keeps the factorization finite when the
            # system is numerically singular; refinement below uses the exact K.
            reg = np.concatenate([np.full(nx, REGULARIZATION), np.full(p, -REGULARIZATION)])
            lu = sla.lu_factor(Ks + np.diag(reg), check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            trace[-1]["error"] = str(exc)
            break

        def direction(Rc, rcl):
            r1 = rd.copy()
            for F, Si, Zi, rpi, Rci in zip(P.Fmats, Sinv, Z, rp, Rc):
                W = _sym(Si @ Rci) - Zi + _sym(Si @ rpi @ Zi)
                r1 += F.T @ W.reshape(-1)
            r1 += P.G.T @ ((rcl - s * z + z * rpl) / s)
            rhs = np.concatenate([r1, -re])
            sol = dscale * sla.lu_solve(lu, dscale * rhs)
            for _ in range(REFINEMENT_STEPS):
                sol += dscale * sla.lu_solve(lu, dscale * (rhs - K @ sol))
            if not np.all(np.isfinite(sol)):
                raise np.linalg.LinAlgError("non-finite Newton direction")
            dx, dy = sol[:nx], sol[nx:]
            dFX = P.cone_values(dx)
            dS = [dF - rpi for dF, rpi in zip(dFX, rp)]
            dZ = [_sym(Si @ Rci) - Zi - _sym(Si @ dSi @ Zi) for Si, Rci, Zi, dSi in zip(Sinv, Rc, Z, dS)]
            ds = P.G @ dx - rpl
            dz = (rcl - s * z - z * ds) / s
            return dx, dS, ds, dZ, dz, dy

        def steps(dS, ds, dZ, dz):
            ap = min([_max_step_psd(Si, dSi) for Si, dSi in zip(S, dS)] + [_max_step_lp(s, ds)])
            ad = min([_max_step_psd(Zi, dZi) for Zi, dZi in zip(Z, dZ)] + [_max_step_lp(z, dz)])
            return ap, ad

        try:
            zero = [np.zeros_like(Si) for Si in S]
            dx, dS, ds, dZ, dz, dy = direction(zero, np.zeros(m))
            ap, ad = steps(dS, ds, dZ, dz)
            ap, ad = min(1.0, ap), min(1.0, ad)
            mu_aff = (sum(np.vdot(Si + ap * dSi, Zi + ad * dZi) for Si, dSi, Zi, dZi in zip(S, dS, Z, dZ))
                      + (s + ap * ds) @ (z + ad * dz)) / nu
            sigma = float(np.clip((mu_aff / mu) ** 3, 0.0, 1.0))
            Rc = [sigma * mu * np.eye(k) - dSi @ dZi for k, dSi, dZi in zip(P.cone_dims, dS, dZ)]
            rcl = sigma * mu - ds * dz
            dx, dS, ds, dZ, dz, dy = direction(Rc, rcl)
            ap, ad = steps(dS, ds, dZ, dz)
            ap = min(1.0, STEP_FRACTION * ap)
            ad = min(1.0, STEP_FRACTION * ad)
        except np.linalg.LinAlgError as exc:
            trace[-1]["error"] = str(exc)
            break
        trace[-1].update(step_primal=ap, step_dual=ad, sigma=sigma)
        if ap < 1e-12 and ad < 1e-12:
            trace[-1]["error"] = "step length collapsed"
            break

        x = x + ap * dx
        S = [_sym(Si + ap * dSi) for Si, dSi in zip(S, dS)]
        s = s + ap * ds
        Z = [_sym(Zi + ad * dZi) for Zi, dZi in zip(Z, dZ)]
        z = z + ad * dz
        y = y + ad * dy

    if status == "optimal" or best is None:
        return _finish(problem, P, (x, Z, z, y), status, it, trace)
    # Keep the best certificate but report the latest primal point.
    (_, bZ, bz, by), _, certified = best
    sol = _finish(problem, P, (x, bZ, bz, by), status, it, trace, certified)
    if sol.report.residual_norm <= DUAL_RESIDUAL_TOL and pinf <= tol and sol.gap <= gap_tol:
        sol.status = "optimal"
    return sol


def _certify(problem, P, Z, z, y):
    """Map interior-point duals back to the user convention and verify them."""
    zc = np.clip(z, 0.0, None)
    y_full = P.U_r @ y if y.size else np.zeros(len(P.eq_origin))
    w = np.zeros(len(problem.linear_constraints))
    up = np.zeros(len(problem.box_vars))
    lo = np.zeros(len(problem.box_vars))
    for zi, (kind, idx, sign) in zip(zc, P.lp_origin):
        if kind == "lin":
            w[idx] = sign * zi
        elif kind == "up":
            up[idx] = zi
        else:
            lo[idx] = zi
    for yi, (kind, idx, scale) in zip(y_full, P.eq_origin):
        if kind == "lin":
            w[idx] = -yi * scale
        elif yi < 0:
            # A fixed box variable has a free multiplier; split it by sign.
            up[idx] += -yi
        else:
            lo[idx] += yi
    cert = _polish(problem, DualCertificate([_psd_project(Zi) for Zi in Z], w, up, lo))
    return cert, check_dual_feasibility(problem, cert)


def _stationarity(problem, cert):
    n = problem.dim
    R = problem.objective.copy()
    for m, Z in zip(problem.psd_maps, cert.cones):
        R += m.adjoint(Z, n)
    r_box = np.array([b.objective for b in problem.box_vars], dtype=float)
    for wi, con in zip(cert.linear, problem.linear_constraints):
        R -= wi * con.G
        if con.box_coeffs is not None:
            r_box -= wi * np.asarray(con.box_coeffs, dtype=float)
    if problem.box_vars:
        r_box = r_box - cert.box_upper + cert.box_lower
    return R, r_box


def _polish(problem, cert):
    """Make the multipliers exactly stationary where the structure allows it.

    With an identity cone the matrix residual is moved into its multiplier.
    An eigenvalue dip this causes is compensated through a row
    ``tr(D rho) <= t`` with positive diagonal ``D`` when that is cheaper than
    the entrywise charge ``check_dual_feasibility`` would apply. Box
    residuals are moved into the box multipliers. Each step keeps every
    multiplier in its cone, so the certificate stays valid and its bound
    accounts for the correction.
    """
    n = problem.dim
    ident = next((j for j, m in enumerate(problem.psd_maps)
                  if m.out_dim == n and np.array_equal(m.rows, EntryMap.identity(n).rows)
                  and np.array_equal(m.cols, EntryMap.identity(n).cols)), None)
    trace_row = next((i for i, c in enumerate(problem.linear_constraints)
                      if c.relation == "<=" and c.box_coeffs is None
                      and np.count_nonzero(c.G - np.diag(np.diag(c.G))) == 0 and np.all(np.diag(c.G) > 0)), None)
    cones = [np.array(Z, dtype=float) for Z in cert.cones]
    w = np.array(cert.linear, dtype=float)
    up = np.array(cert.box_upper, dtype=float)
    lo = np.array(cert.box_lower, dtype=float)
    cert = DualCertificate(cones, w, up, lo)
    if ident is not None:
        R, _ = _stationarity(problem, cert)
        Z = _sym(cones[ident] - R)
        e = float(np.linalg.eigvalsh(Z)[0])
        if e < 0 and trace_row is not None:
            con = problem.linear_constraints[trace_row]
            dh = 1.0 / np.sqrt(np.diag(con.G))
            t = max(0.0, -float(np.linalg.eigvalsh(_sym(dh[:, None] * Z * dh[None, :]))[0]))
            t *= 1.0 + 1e-12
            bound_diag = np.diag(np.broadcast_to(np.asarray(problem.entry_bound, dtype=float), (n, n)))
            if t * con.rhs <= -e * float(np.sum(bound_diag)):
                Z = Z + t * con.G
                w[trace_row] += t
        cones[ident] = Z
    if problem.box_vars:
        _, r_box = _stationarity(problem, cert)
        up += np.clip(r_box, 0.0, None)
        lo += np.clip(-r_box, 0.0, None)
    return cert


def _user_primal(problem, P, x):
    n = P.n
    rho = np.zeros((n, n))
    rho[P.iu] = x[: P.n_rho]
    rho = rho + rho.T - np.diag(np.diag(rho))
    t = x[P.n_rho:].copy()
    value = float(np.sum(problem.objective * rho) + sum(b.objective * ti for b, ti in zip(problem.box_vars, t)) + problem.offset)
    return rho, t, value


def _finish(problem, P, iterate, status, iterations, trace, certified=None):
    if iterate is None:
        x = np.zeros(P.nx)
        Z = [np.zeros((k, k)) for k in P.cone_dims]
        z = np.zeros(P.G.shape[0])
        y = np.zeros(P.A.shape[0])
    else:
        x, Z, z, y = iterate
    rho, t, primal = _user_primal(problem, P, x)
    cert, report = certified if certified is not None else _certify(problem, P, Z, z, y)
    return SdpSolution(
        primal_value=primal,
        dual_value=report.bound,
        gap=float(report.bound - primal),
        rho_opt=rho,
        t_opt=t,
        dual_certificate=cert,
        report=report,
        status=status,
        iterations=iterations,
        trace=trace,
    )


def solve_or_raise(problem: SdpProblem, **kwargs) -> SdpSolution:
    sol = solve(problem, **kwargs)
    if sol.status != "optimal":
        last = sol.trace[-1] if sol.trace else {}
        raise SdpError(f"SDP solve ended with status {sol.status!r} after {sol.iterations} iterations (last: {last})", sol)
    return sol
