"""Command-line interface.

Subcommands::

    mich detect   data.csv [options]     fit and report change-points as JSON
    mich simulate [design options]       write a simulated series and its truth
    mich bench    [design options]       replicate a design and tabulate metrics
    mich priors   --kind K --T n [--d d] print a location prior as one CSV row

Time indices in every file written here are 1-based.  Exit status is 0 on
success, 2 for unusable input or an infeasible design and 3 when a fit
breaks down numerically.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from .engine import MichConfig
from .errors import DataError, DegenerateWeightsError, DomainError, EstimatorFailure, NumericalFailure
from .postprocess import detect_changes
from .priors import make_prior
from .simbench import NOISE_FAMILIES, SimulationSpec, generate_sim1, generate_sim2, run_bench

SCHEMA_VERSION = "1"
EXIT_OK, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3
BENCH_COLUMNS = ("bias", "hausdorff", "fpsle", "fnsle", "ci_len", "ccd", "time_s")
_MODEL_NAMES = {"gaussian": "gaussian", "mvmean": "multivariate-mean", "poisson": "poisson"}


# ---------------------------------------------------------------------------
# input / output
# ---------------------------------------------------------------------------


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_series(path) -> np.ndarray:
    """Read a numeric CSV into a ``(T, d)`` array.

    A first row with any non-numeric cell is taken as a header.  Blank lines
    are skipped.  Errors name the offending line.
    """
    rows = []
    width = None
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                cells = [c.strip() for c in row]
                if not any(cells):
                    continue
                if not rows and width is None and not all(_is_number(c) for c in cells):
                    width = len(cells)
                    continue
                if width is None:
                    width = len(cells)
                if len(cells) != width:
                    raise DataError(f"line {lineno}: expected {width} columns, found {len(cells)}")
                try:
                    values = [float(c) for c in cells]
                except ValueError:
                    raise DataError(f"line {lineno}: non-numeric value") from None
                if not all(math.isfinite(v) for v in values):
                    raise DataError(f"line {lineno}: NaN or infinite value")
                rows.append(values)
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise DataError(f"{path} contains no data rows")
    return np.asarray(rows, dtype=float)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def build_report(fit, report, model: str) -> dict:
    """JSON-ready document describing a fit and its detections."""
    changepoints = []
    for comp in report.components:
        cs = comp.credible_set
        changepoints.append({
            "class": comp.cls,
            "map_index": comp.map_index + 1,
            "map_probability": comp.map_probability,
            "credible_set": [i + 1 for i in cs.indices],
            "mass": cs.mass,
            "detected": comp.detected,
        })
    return _jsonable({
        "schema_version": SCHEMA_VERSION,
        "model": model,
        "T": fit.T,
        "d": fit.d,
        "mu0": fit.mu0,
        "lambda0": fit.lambda0,
        "elbo": fit.elbo,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "changepoints": changepoints,
        "counts": report.counts,
    })


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _config_from_args(args) -> tuple[MichConfig, bool, str]:
    model = _MODEL_NAMES[args.model]
    auto = args.auto or (args.L is None and args.K is None and args.J is None)
    classes = args.classes or ("J" if model == "gaussian" else "L")
    cfg = MichConfig(
        L=args.L or 0, K=args.K or 0, J=args.J or 0,
        omega0=args.omega0, u0=args.u0, v0=args.v0, prior=args.prior, tol=args.tol,
        estimate_intercept=not args.no_intercept, reverse_restart=not args.no_reverse,
        model=model, merge=not args.no_merge, alpha=args.alpha, delta=args.delta,
    )
    return cfg, auto, classes


def cmd_detect(args) -> int:
    y = read_series(args.data)
    cfg, auto, classes = _config_from_args(args)
    if cfg.model != "multivariate-mean":
        if y.shape[1] != 1:
            raise DataError(f"the {args.model} model takes one column, found {y.shape[1]}")
        y = y[:, 0]
    fit, report = detect_changes(y, cfg, auto=auto, classes=classes)
    doc = build_report(fit, report, args.model)
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def _spec_from_args(args) -> SimulationSpec:
    return SimulationSpec(
        T=args.T, J=args.J, min_space=args.min_space,
        C=args.C if args.C is not None else (math.sqrt(10.0) if args.d > 1 else math.sqrt(200.0)),
        d=args.d, p=args.p, noise=args.noise, nu=args.nu, theta=args.theta, rho=args.rho,
        vanishing=args.vanishing, seed=args.seed,
    )


def _write_matrix(path_or_none, y: np.ndarray) -> None:
    y = y.reshape(len(y), -1)
    lines = [",".join(f"y{j + 1}" for j in range(y.shape[1]))]
    lines += [",".join(repr(float(v)) for v in row) for row in y]
    _emit("\n".join(lines) + "\n", path_or_none)


def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    rng = np.random.default_rng(spec.seed)
    y, truth = generate_sim2(spec, rng) if spec.d > 1 else generate_sim1(spec, rng)
    _write_matrix(args.out, y)
    truth_doc = _jsonable({
        "schema_version": SCHEMA_VERSION,
        "design": dataclasses.asdict(spec),
        "tau": list(truth.tau),
        "mu_segments": truth.mu_segments,
        "sigma_segments": truth.sigma_segments,
    })
    truth_path = args.truth
    if truth_path is None and args.out:
        truth_path = str(Path(args.out).with_suffix(".truth.json"))
    text = json.dumps(truth_doc, indent=2) + "\n"
    if truth_path:
        Path(truth_path).write_text(text, encoding="utf-8")
    else:
        sys.stderr.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = _spec_from_args(args)
    model = "multivariate-mean" if spec.d > 1 else "gaussian"
    auto = args.auto
    if auto:
        cfg = MichConfig(model=model, alpha=args.alpha, delta=args.delta, tol=args.tol)
        classes = args.classes or ("L" if spec.d > 1 else "J")
    else:
        counts = {"L": spec.J} if spec.d > 1 else {"J": spec.J}
        cfg = MichConfig(model=model, alpha=args.alpha, delta=args.delta, tol=args.tol, **counts)
        classes = ("J",)
    result = run_bench(spec, cfg, args.replicates, auto=auto, classes=classes, workers=args.workers)
    summary = result.summary()
    lines = [",".join(BENCH_COLUMNS), ",".join(repr(float(summary[c])) for c in BENCH_COLUMNS)]
    _emit("\n".join(lines) + "\n", args.out)
    if result.failures:
        sys.stderr.write(f"{result.failures} of {args.replicates} replicates failed\n")
    return EXIT_OK


def cmd_priors(args) -> int:
    prior = make_prior(args.kind, args.T, args.d)
    _emit(",".join(repr(float(p)) for p in prior.pi) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_design_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--T", type=int, default=100, help="series length")
    p.add_argument("--J", type=int, default=2, help="true number of changes")
    p.add_argument("--min-space", type=int, default=15, help="minimum spacing between changes")
    p.add_argument("--C", type=float, default=None,
                   help="signal constant (default sqrt(200), or sqrt(10) when d > 1)")
    p.add_argument("--noise", choices=NOISE_FAMILIES, default="gaussian")
    p.add_argument("--theta", type=float, default=0.5, help="MA(2) coefficient")
    p.add_argument("--nu", type=float, default=4.0, help="Student-t degrees of freedom")
    p.add_argument("--d", type=int, default=1, help="dimension; d > 1 selects the multivariate design")
    p.add_argument("--p", type=float, default=1.0, help="fraction of coordinates that change")
    p.add_argument("--rho", type=float, default=0.0, help="spatial correlation between coordinates")
    p.add_argument("--vanishing", action="store_true", help="shrink jumps with the active dimension")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mich", description="Bayesian multiple change-point detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="fit a model to a CSV series and report change-points")
    p.add_argument("data", help="CSV file, one column per coordinate, rows in time order")
    p.add_argument("--model", choices=tuple(_MODEL_NAMES), default="gaussian")
    p.add_argument("-L", type=int, default=None, help="mean (or rate) components")
    p.add_argument("-K", type=int, default=None, help="variance components")
    p.add_argument("-J", type=int, default=None, help="joint mean and variance components")
    p.add_argument("--auto", action="store_true",
                   help="choose the counts by the ELBO (also used when no counts are given)")
    p.add_argument("--classes", default=None, help="classes grown by --auto, e.g. J or LK")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--omega0", type=float, default=1e-3)
    p.add_argument("--u0", type=float, default=1e-3)
    p.add_argument("--v0", type=float, default=1e-3)
    p.add_argument("--prior", choices=("weighted", "uniform"), default="weighted")
    p.add_argument("--no-intercept", action="store_true", help="keep mu0 and lambda0 fixed")
    p.add_argument("--no-reverse", action="store_true", help="skip the reversed-series restart")
    p.add_argument("--no-merge", action="store_true", help="skip duplicate merging")
    p.add_argument("--seed", type=int, default=0, help="accepted for symmetry; fitting is deterministic")
    p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="write a simulated series (CSV) and its truth (JSON)")
    _add_design_args(p)
    p.add_argument("--out", default=None, help="data CSV (stdout when omitted)")
    p.add_argument("--truth", default=None,
                   help="truth JSON (default: next to --out, or stderr when --out is omitted)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="replicate a design and write one row of mean metrics")
    _add_design_args(p)
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--auto", action="store_true", help="select counts by the ELBO instead of the truth")
    p.add_argument("--classes", default=None)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--workers", type=int, default=None, help="worker processes (MICH_THREADS caps the default)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("priors", help="print a location prior")
    p.add_argument("--kind", required=True,
                   choices=("uniform", "weighted-mean", "weighted-var", "weighted-meanvar"))
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_priors)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataError, DomainError, EstimatorFailure) as exc:
        print(f"mich: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalFailure, DegenerateWeightsError, FloatingPointError) as exc:
        print(f"mich: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
