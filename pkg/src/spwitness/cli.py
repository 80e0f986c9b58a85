"""Command-line driver: loss sweeps, single-point verdicts, certificate checks, sampling.

Subcommands
-----------
``sweep``    CSV of S, local statistics, bounds and verdicts along an ``eta_AB`` grid.
``verdict``  JSON report for one loss setting, or for a samples CSV.
``certify``  Check the closed-form ``p_joint`` certificate on a grid.
``extract``  Local photon statistics from a samples CSV.
``sample``   Write raw homodyne samples for one loss setting.

Configuration comes from an optional JSON file (``--config``); any flag
given on the command line overrides it. Exit codes: 0 success, 1 usage or
input error, 2 certificate or verdict failure, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds as bnd
from . import fock, homodyne, tomography, witness
from .sdp import SdpError

VERDICT_SCHEMA = "spwitness.verdict/1"
CERTIFY_SCHEMA = "spwitness.certify/1"
STATS_SCHEMA = "spwitness.stats/1"
DEFAULT_BOUNDS = ("sdp_enhanced", "sdp_original")
EXIT_OK, EXIT_USAGE, EXIT_FAILURE, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Everything needed to simulate and analyse one or more loss settings.

    ``loss_mode`` is ``sym`` (``eta_A = eta_B = sqrt(eta_AB)``), ``asym``
    (``eta_A = 1``, ``eta_B = eta_AB``) or ``explicit`` (``eta_A``, ``eta_B``
    given, the grid is ignored). ``stats_source`` selects pattern-function
    estimates from the simulated samples (``estimated``) or the exact local
    statistics of the simulated state (``exact``). With ``bound_uncertainty``
    the SDP bounds take the estimated standard errors into account at
    ``k_sigma``.
    """

    source_p1: float = 1.0
    source_p2: float = 0.0
    loss_mode: str = "sym"
    eta_A: float | None = None
    eta_B: float | None = None
    eta_grid: list = field(default_factory=lambda: [1.0])
    gamma: float | None = None
    taus: list | None = None
    samples_per_setting: int = 100_000
    seed: int = 0
    bounds: list = field(default_factory=lambda: list(DEFAULT_BOUNDS))
    k_sigma: float = 3.0
    stats_source: str = "estimated"
    bound_uncertainty: bool = False
    workers: int = 1
    output: str | None = None

    def validate(self) -> ExperimentConfig:
        if self.loss_mode not in ("sym", "asym", "explicit"):
            raise UsageError(f"loss_mode must be sym, asym or explicit, got {self.loss_mode!r}")
        if self.loss_mode == "explicit":
            if self.eta_A is None or self.eta_B is None:
                raise UsageError("loss_mode explicit needs eta_A and eta_B")
            fock.LossParams(self.eta_A, self.eta_B)
        if (self.gamma is None) != (self.taus is None):
            raise UsageError("a temporal-overlap schedule needs both gamma and taus")
        grid = self.grid()
        if not grid or any(not 0.0 < e <= 1.0 for e in grid):
            raise UsageError(f"eta grid values must lie in (0, 1], got {grid}")
        if self.samples_per_setting < 1:
            raise UsageError("samples_per_setting must be positive")
        if self.stats_source not in ("estimated", "exact"):
            raise UsageError(f"stats_source must be estimated or exact, got {self.stats_source!r}")
        if self.stats_source == "estimated" and 4 * self.samples_per_setting < tomography.MIN_SAMPLES:
            raise UsageError(f"estimated statistics need at least {tomography.MIN_SAMPLES} samples in total")
        for m in self.bounds:
            if m not in bnd.METHODS:
                raise UsageError(f"unknown bound method {m!r}; choose from {', '.join(bnd.METHODS)}")
        if self.k_sigma < 0:
            raise UsageError("k_sigma must be non-negative")
        fock.heralded_source_state(self.source_p1, self.source_p2)
        return self

    def grid(self) -> list:
        if self.loss_mode == "explicit":
            return [self.eta_A * self.eta_B]
        if self.gamma is not None:
            return [fock.temporal_overlap_efficiency(self.gamma, t) for t in self.taus]
        return [float(e) for e in self.eta_grid]

    def local_etas(self, eta_ab: float) -> tuple[float, float]:
        if self.loss_mode == "explicit":
            return self.eta_A, self.eta_B
        if self.loss_mode == "sym":
            e = math.sqrt(eta_ab)
            return e, e
        return 1.0, eta_ab

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class SweepRow:
    eta_ab: float
    km: float
    s_exact: float
    s_mc: float
    s_se: float
    stats_A: tuple
    stats_B: tuple
    bounds: dict
    verdicts: dict
    errors: list = field(default_factory=list)


def point_seed(seed: int, index: int) -> int:
    """Seed for grid point ``index``; sampling then splits it per setting."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def build_state(config: ExperimentConfig, eta_ab: float) -> fock.TwoModeState:
    source = fock.heralded_source_state(config.source_p1, config.source_p2)
    split = fock.beam_splitter_split(source)
    eta_A, eta_B = config.local_etas(eta_ab)
    return fock.apply_loss(split, fock.LossParams(eta_A, eta_B))


def _analyse(config, wres, stats_A, stats_B, eta_ab):
    """Bounds and verdicts for one data point; failures are collected, not raised."""
    bounds, verdicts, errors = {}, {}, []
    for method in config.bounds:
        try:
            k = config.k_sigma if (config.bound_uncertainty and method.startswith("sdp")) else 0.0
            b = bnd.compute_bound(method, stats_A, stats_B, eta_ab=eta_ab, k_sigma=k)
            bounds[method] = b
            verdicts[method] = bnd.verdict(wres, b, config.k_sigma)
        except (ValueError, SdpError) as exc:
            bounds[method] = None
            verdicts[method] = "error"
            errors.append(f"{method}: {exc}")
    return bounds, verdicts, errors


def _stats_for(config, state, batch):
    if config.stats_source == "exact":
        return fock.local_photon_probs(state)
    return (tomography.estimate_local_probs(batch, "A"), tomography.estimate_local_probs(batch, "B"))


def run_point(config: ExperimentConfig, index: int, eta_ab: float) -> SweepRow:
    state = build_state(config, eta_ab)
    s_exact = homodyne.exact_s(state)
    batch = homodyne.sample_batch(state, config.samples_per_setting, point_seed(config.seed, index))
    wres = witness.s_from_samples(batch)
    stats_A, stats_B = _stats_for(config, state, batch)
    # Bounds need proper distributions; estimates may stray slightly outside.
    clipped = (stats_A.clipped(), stats_B.clipped())
    bounds, verdicts, errors = _analyse(config, wres, *clipped, eta_ab)
    return SweepRow(
        eta_ab=eta_ab,
        km=float(fock.km_equivalent(eta_ab)),
        s_exact=s_exact,
        s_mc=wres.s,
        s_se=wres.se,
        stats_A=stats_A.probs,
        stats_B=stats_B.probs,
        bounds={m: (None if b is None else b.value) for m, b in bounds.items()},
        verdicts=verdicts,
        errors=errors,
    )


def _run_indexed(args):
    config, index, eta = args
    try:
        return run_point(config, index, eta)
    except (ValueError, RuntimeError) as exc:
        nan = float("nan")
        return SweepRow(eta, float(fock.km_equivalent(eta)), nan, nan, nan, (nan,) * 3, (nan,) * 3,
                        {m: None for m in config.bounds}, {m: "error" for m in config.bounds}, [f"point: {exc}"])


def run_sweep(config: ExperimentConfig) -> list[SweepRow]:
    """One row per grid point, in grid order, deterministic under ``config.seed``."""
    config.validate()
    jobs = [(config, i, eta) for i, eta in enumerate(config.grid())]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_run_indexed, jobs))
    return [_run_indexed(j) for j in jobs]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return f"{float(v):.12g}"


def sweep_header(methods) -> list[str]:
    return (["eta_ab", "km", "s_exact", "s_mc", "s_se", "p0a", "p1a", "pge2a", "p0b", "p1b", "pge2b"]
            + [f"bound_{m}" for m in methods] + [f"verdict_{m}" for m in methods] + ["errors"])


def rows_to_csv(rows, methods) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(sweep_header(methods))
    for r in rows:
        w.writerow([_fmt(v) for v in (r.eta_ab, r.km, r.s_exact, r.s_mc, r.s_se, *r.stats_A, *r.stats_B)]
                   + [_fmt(r.bounds.get(m)) for m in methods] + [r.verdicts.get(m, "") for m in methods]
                   + ["; ".join(r.errors)])
    return buf.getvalue()


def run_verdict(config: ExperimentConfig, samples_path: str | None = None) -> dict:
    """Full report for one point: either simulated from ``config`` or read from a samples CSV."""
    if samples_path is not None:
        batch = homodyne.SampleBatch.from_csv(samples_path)
        state = None
        eta_ab = None
        stats_A = tomography.estimate_local_probs(batch, "A")
        stats_B = tomography.estimate_local_probs(batch, "B")
        config = dataclasses.replace(config, bounds=[m for m in config.bounds if not m.startswith("lossy")])
    else:
        config.validate()
        grid = config.grid()
        if len(grid) != 1:
            raise UsageError(f"verdict needs a single loss setting, got {len(grid)} grid points")
        eta_ab = grid[0]
        state = build_state(config, eta_ab)
        batch = homodyne.sample_batch(state, config.samples_per_setting, point_seed(config.seed, 0))
        stats_A, stats_B = _stats_for(config, state, batch)
    wres = witness.s_from_samples(batch)
    clipped = (stats_A.clipped(), stats_B.clipped())
    bounds, verdicts, errors = _analyse(config, wres, *clipped, eta_ab)
    report = {
        "schema": VERDICT_SCHEMA,
        "config": dataclasses.asdict(config),
        "samples": samples_path,
        "eta_ab": eta_ab,
        "local_etas": None if eta_ab is None else list(config.local_etas(eta_ab)),
        "km": None if eta_ab is None else float(fock.km_equivalent(eta_ab)),
        "s_exact": None if state is None else homodyne.exact_s(state),
        "witness": wres.to_dict(),
        "stats_A": stats_A.to_dict(),
        "stats_B": stats_B.to_dict(),
        "p_star": tomography.p_star(stats_A, stats_B).p_star,
        "bounds": {m: (None if b is None else b.to_dict()) for m, b in bounds.items()},
        "verdicts": verdicts,
        "errors": errors,
    }
    return report


def run_certify(grid, perturb: float = 0.0) -> dict:
    """Residual table for the closed-form certificate; ``perturb`` shifts lambda to test detection."""
    rows = []
    for p in grid:
        if not 0.0 < p <= 0.5:
            raise UsageError(f"certificate grid values must lie in (0, 0.5], got {p}")
        cert = bnd.build_certificate(p)
        eq = bnd.pjoint_closed_form_value(p)
        if perturb:
            cert = dataclasses.replace(cert, lam=cert.lam + perturb)
            M, N = bnd.witness_matrices()
            R = cert.A_matrix + bnd.partial_transpose_01(cert.B_matrix) - cert.mu * N - cert.lam * np.eye(9) + M
            cert = dataclasses.replace(cert, residual_norm=float(np.linalg.norm(R)))
        value_error = abs(cert.value - eq)
        ok = cert.ok() and value_error <= 1e-12
        rows.append({
            "p_joint": p,
            "residual_norm": cert.residual_norm,
            "min_eig_A": cert.min_eig_A,
            "min_eig_B": cert.min_eig_B,
            "value": cert.value,
            "closed_form": eq,
            "value_error": value_error,
            "pass": ok,
        })
    return {"schema": CERTIFY_SCHEMA, "perturb": perturb, "rows": rows, "all_pass": all(r["pass"] for r in rows)}


# -- argument handling -------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _add_experiment_flags(p):
    g = p.add_argument_group("experiment")
    g.add_argument("--config", help="JSON file with ExperimentConfig fields; flags override it")
    g.add_argument("--source-p1", type=float)
    g.add_argument("--source-p2", type=float)
    g.add_argument("--loss-mode", choices=("sym", "asym", "explicit"))
    g.add_argument("--eta-a", type=float, dest="eta_A")
    g.add_argument("--eta-b", type=float, dest="eta_B")
    g.add_argument("--eta-grid", type=_floats, help="comma-separated eta_AB values")
    g.add_argument("--eta-ab", type=float, help="single eta_AB value")
    g.add_argument("--gamma", type=float, help="temporal-mode decay rate for a tau schedule")
    g.add_argument("--taus", type=_floats, help="comma-separated temporal offsets (with --gamma)")
    g.add_argument("--samples-per-setting", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--bounds", type=lambda s: [m.strip() for m in s.split(",") if m.strip()])
    g.add_argument("--k-sigma", type=float)
    g.add_argument("--stats-source", choices=("estimated", "exact"))
    g.add_argument("--bound-uncertainty", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--workers", type=int)
    g.add_argument("--output", "-o")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spwitness", description="Single-photon entanglement witness toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sweep", help="loss sweep to CSV")
    _add_experiment_flags(p)

    p = sub.add_parser("verdict", help="JSON report for a single point")
    _add_experiment_flags(p)
    p.add_argument("--samples", help="samples CSV to analyse instead of simulating")
    p.add_argument("--require-witnessed", action="store_true",
                   help="exit with status 2 unless the first requested bound is beaten")

    p = sub.add_parser("certify", help="verify the closed-form p_joint certificate")
    p.add_argument("--grid", type=_floats, default=[0.05, 0.1, 0.25, 0.5])
    p.add_argument("--perturb", type=float, default=0.0, help="add this to lambda before checking")
    p.add_argument("--output", "-o")

    p = sub.add_parser("extract", help="local photon statistics from a samples CSV")
    p.add_argument("samples")
    p.add_argument("--n-levels", type=int, default=3)
    p.add_argument("--output", "-o")

    p = sub.add_parser("sample", help="write simulated samples to CSV")
    _add_experiment_flags(p)
    return parser


def config_from_args(args) -> ExperimentConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    for f in dataclasses.fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            data[f.name] = v
    if getattr(args, "eta_ab", None) is not None:
        data["eta_grid"] = [args.eta_ab]
    return ExperimentConfig.from_dict(data)


def _emit(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "certify":
            report = run_certify(args.grid, args.perturb)
            _emit(_dump(report), args.output)
            return EXIT_OK if report["all_pass"] else EXIT_FAILURE

        if args.command == "extract":
            batch = homodyne.SampleBatch.from_csv(args.samples)
            sa = tomography.estimate_local_probs(batch, "A", args.n_levels)
            sb = tomography.estimate_local_probs(batch, "B", args.n_levels)
            report = {"schema": STATS_SCHEMA, "samples": args.samples, "stats_A": sa.to_dict(),
                      "stats_B": sb.to_dict(), "p_star": tomography.p_star(sa, sb).p_star}
            _emit(_dump(report), args.output)
            return EXIT_OK

        config = config_from_args(args)
        if args.command == "sweep":
            rows = run_sweep(config)
            _emit(rows_to_csv(rows, config.bounds), config.output)
            return EXIT_OK

        if args.command == "sample":
            config.validate()
            grid = config.grid()
            if len(grid) != 1:
                raise UsageError("sample needs a single loss setting")
            state = build_state(config, grid[0])
            batch = homodyne.sample_batch(state, config.samples_per_setting, point_seed(config.seed, 0))
            if config.output in (None, "-"):
                raise UsageError("sample needs --output PATH")
            batch.to_csv(config.output)
            return EXIT_OK

        if args.command == "verdict":
            report = run_verdict(config, args.samples)
            _emit(_dump(report), config.output)
            if any(e.split(":")[0] in config.bounds for e in report["errors"]):
                if any("SDP solve" in e for e in report["errors"]):
                    return EXIT_SOLVER
                return EXIT_FAILURE
            if args.require_witnessed and report["verdicts"].get(config.bounds[0]) != "witnessed":
                return EXIT_FAILURE
            return EXIT_OK
    except UsageError as exc:
        print(f"spwitness: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SdpError as exc:
        print(f"spwitness: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, OSError) as exc:
        print(f"spwitness: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
