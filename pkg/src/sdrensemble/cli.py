"""Command-line interface: fit on CSV data, run benchmark experiments.

Exit codes: 0 success, 1 partial (some replicates failed), 2 usage or
data errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict
from datetime import datetime, timezone

import numpy as np

from .core import Dataset, FitConfig, substream, validate_config
from .bench import (
    EXPERIMENTS,
    FAMILY_KINDS,
    METHODS,
    ExperimentSpec,
    build_family,
    fit_subspace,
    format_table,
    run_experiment,
    write_outputs,
)
from .order import estimate_dimension
from .simgen import list_models
from .core import standardize_predictors

__all__ = ["main", "csv_ingest"]


class UsageError(ValueError):
    """Bad flags or malformed input data; maps to exit code 2."""


def csv_ingest(path: str, response_cols: list[str] | None = None) -> tuple[Dataset, list[str], list[str]]:
    """Read a header-ed numeric CSV into a Dataset.

    Response columns are selected by name; without an explicit list the
    column named "y" is used, falling back to the last column. Raises
    UsageError on duplicate headers, non-numeric cells, or missing values.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise UsageError(f"{path}: empty file") from None
            header = [h.strip() for h in header]
            if len(set(header)) != len(header):
                dupes = sorted({h for h in header if header.count(h) > 1})
                raise UsageError(f"{path}: duplicate header names {dupes}")
            rows = []
            for lineno, rec in enumerate(reader, start=2):
                if not rec or (len(rec) == 1 and not rec[0].strip()):
                    continue
                if len(rec) != len(header):
                    raise UsageError(f"{path}:{lineno}: expected {len(header)} cells, got {len(rec)}")
                try:
                    vals = [float(c) for c in rec]
                except ValueError:
                    raise UsageError(f"{path}:{lineno}: non-numeric cell") from None
                if any(math.isnan(v) or math.isinf(v) for v in vals):
                    raise UsageError(f"{path}:{lineno}: missing or non-finite value")
                rows.append(vals)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise UsageError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    if response_cols is None:
        response_cols = ["y"] if "y" in header else [header[-1]]
    missing = [c for c in response_cols if c not in header]
    if missing:
        raise UsageError(f"{path}: response column(s) not found: {missing}")
    y_idx = [header.index(c) for c in response_cols]
    x_idx = [i for i in range(len(header)) if i not in y_idx]
    if not x_idx:
        raise UsageError(f"{path}: no predictor columns left")
    try:
        ds = Dataset(X=data[:, x_idx], Y=data[:, y_idx])
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    return ds, [header[i] for i in x_idx], [header[i] for i in y_idx]


def _sig12(x: float) -> float:
    return float(f"{x:.12g}")


def _basis_json(fit) -> list[list[float]]:
    B = fit.basis.B
    return [[_sig12(v) for v in B[:, c]] for c in range(B.shape[1])]


def _config_from_args(args) -> FitConfig:
    cfg = FitConfig(m=args.m, kernel=args.kernel, seed=args.seed,
                    trim_quantile=args.trim_quantile, varsigma=args.varsigma)
    errors = validate_config(cfg)
    if errors:
        raise UsageError("invalid configuration: " + "; ".join(errors))
    return cfg


def _cmd_fit(args) -> int:
    response_cols = args.response_cols.split(",") if args.response_cols else None
    ds, x_names, y_names = csv_ingest(args.csv, response_cols)
    cfg = _config_from_args(args)
    if args.dim != "auto":
        try:
            dim = int(args.dim)
        except ValueError:
            raise UsageError(f"--dim must be an integer or 'auto', got {args.dim!r}") from None
        if not 1 <= dim <= ds.p:
            raise UsageError(f"--dim must be in 1..p={ds.p}, got {dim}")
    fam_rng = substream(cfg.seed, 0, 1)
    y_for_family = ds.Y[:, 0] if ds.s == 1 else None
    family = build_family(args.family, cfg.m, ds.s, fam_rng, y=y_for_family)

    report: dict = {
        "config": {**asdict(cfg), "method": args.method, "family": args.family,
                   "dim": args.dim, "standardize": not args.no_standardize,
                   "predictors": x_names, "responses": y_names,
                   "n": ds.n, "p": ds.p, "s": ds.s},
    }
    cv_curve = None
    if args.dim == "auto":
        if args.no_standardize:
            Z = ds.X
        else:
            Z, _ = standardize_predictors(ds.X)
        Yq = ds.Y
        if args.family == "boxcox" and (ds.Y <= 0).any():
            from .families import shift_nonneg
            Yq = shift_nonneg(ds.Y)
        cv_curve = estimate_dimension(Z, Yq, family, cfg)
        dim = cv_curve.d_hat
        report["cv_curve"] = {
            "values": [
                v if math.isfinite(v) else None for v in cv_curve.values],
            "d_hat": cv_curve.d_hat,
            "bandwidths": [None if math.isnan(b) else b for b in cv_curve.bandwidths],
            "fallback_counts": list(cv_curve.fallback_counts),
            "fit_errors": list(cv_curve.fit_errors),
        }
    if args.dim == "auto" and dim == 0:
        report["basis"] = []
        report["diagnostics"] = {
            "note": "selected dimension 0: no predictor direction improves on the mean"}
        report["objective_trace"] = []
    else:
        fit, extras = fit_subspace(ds.X, ds.Y, dim, cfg, family,
                                   method=args.method,
                                   standardize=not args.no_standardize)
        report["basis"] = _basis_json(fit)
        report["objective_trace"] = [float(v) for v in fit.objective_trace]
        report["diagnostics"] = {
            "converged": fit.converged,
            "n_outer": fit.n_outer,
            "n_inner": fit.n_inner,
            "outer_bandwidths": [float(h) for h in fit.outer_bandwidths],
            "notes": extras["notes"],
            "panel_width": extras["panel_width"],
        }
    report["timestamp"] = datetime.now(timezone.utc).isoformat()
    text = json.dumps(report, indent=2, default=str)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from None


def _cmd_bench(args) -> int:
    spec = ExperimentSpec(
        experiment=args.experiment,
        replicates=args.replicates,
        seed=args.seed,
        model=args.model,
        n=args.n, p=args.p, m=args.m,
        n_list=_int_list(args.n_list) if args.n_list else None,
        m_list=_int_list(args.m_list) if args.m_list else None,
        method=args.method,
        family=args.family,
        kernel=args.kernel,
        standardize=not args.no_standardize,
        trim_quantile=args.trim_quantile,
        varsigma=args.varsigma,
        workers=args.workers,
    )
    table = run_experiment(spec)
    paths = write_outputs(table, args.out_dir)
    print(format_table(table))
    print("wrote: " + ", ".join(str(p) for p in paths.values()))
    return 1 if table.n_failed else 0


def _cmd_models(_args) -> int:
    print(f"{'name':<8} {'d0':>3} {'s':>2} {'n':>6} {'p':>3} {'m':>6}  description")
    for info in list_models():
        print(f"{info.name:<8} {info.d0:>3} {info.s:>2} {info.default_n:>6} "
              f"{info.default_p:>3} {info.default_m:>6}  {info.description}")
    return 0


def _add_common_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=METHODS, default="rmave")
    p.add_argument("--family", choices=FAMILY_KINDS, default="cf")
    p.add_argument("--m", type=int, default=15, help="ensemble size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kernel", choices=("biweight", "gaussian"), default="biweight")
    p.add_argument("--no-standardize", action="store_true",
                   help="fit on raw predictors instead of standardized ones")
    p.add_argument("--trim-quantile", type=float, default=0.05)
    p.add_argument("--varsigma", type=float, default=0.75)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdrensemble",
        description="Ensemble sufficient dimension reduction (MAVE-family estimators)")
    sub = parser.add_subparsers(dest="command", required=True)

    pf = sub.add_parser("fit", help="fit a subspace to CSV data")
    pf.add_argument("csv", help="input CSV with a header row")
    pf.add_argument("--response-cols", default=None,
                    help="comma-separated response column names (default: 'y' or last column)")
    pf.add_argument("--dim", default="auto",
                    help="target dimension, integer or 'auto' (cross-validated)")
    pf.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    _add_common_fit_flags(pf)
    pf.set_defaults(func=_cmd_fit)

    pb = sub.add_parser("bench", help="run a replicated benchmark experiment")
    pb.add_argument("experiment", choices=EXPERIMENTS)
    pb.add_argument("--model", default=None)
    pb.add_argument("--n", type=int, default=None)
    pb.add_argument("--p", type=int, default=None)
    pb.add_argument("--n-list", default=None, help="comma-separated sample sizes")
    pb.add_argument("--m-list", default=None, help="comma-separated ensemble sizes")
    pb.add_argument("--replicates", type=int, default=20)
    pb.add_argument("--out-dir", default="bench_out")
    pb.add_argument("--workers", type=int, default=None,
                    help="replicate pool size (SDR_THREADS caps it)")
    _add_common_fit_flags(pb)
    pb.set_defaults(func=_cmd_bench)

    pm = sub.add_parser("models", help="list the built-in benchmark models")
    pm.set_defaults(func=_cmd_models)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
