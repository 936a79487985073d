"""Experiment harness: fit pipelines, replicated benchmarks, and tables.

Replicates are independent and deterministic from seeds derived per
replicate index, so any worker count produces identical per-replicate
values; aggregation is an ordered reduction over the replicate list.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .core import (
    Dataset,
    FitConfig,
    child_seed,
    standardize_predictors,
    substream,
    unstandardize_directions,
    validate_config,
)
from .families import (
    FunctionFamily,
    boxcox_family,
    default_slice_thresholds,
    evaluate,
    haar_family,
    identity_family,
    kde_family,
    poly_family,
    sample_cf_family,
    shift_nonneg,
    slice_family,
)
from .estimators import EnsembleFit, mave_ensemble, opg_ensemble, rmave_ensemble
from .order import estimate_dimension
from .simgen import ModelSpec, generate, list_models
from .subspace import Basis, distance, orthonormalize

__all__ = [
    "ExperimentSpec",
    "RunSetting",
    "ResultTable",
    "build_family",
    "fit_subspace",
    "run_experiment",
    "write_outputs",
    "format_table",
    "resolve_workers",
    "EXPERIMENTS",
]

FAMILY_KINDS = ("cf", "boxcox", "haar", "slice", "poly", "kde", "identity")
METHODS = ("opg", "mave", "rmave")
EXPERIMENTS = ("table1", "table2", "table3", "table4", "table5",
               "fig1", "fig2", "ex8", "custom")

_MODEL_INFO = {info.name: info for info in list_models()}


def resolve_workers(requested: int | None = None) -> int:
    """Worker count for replicate pools; SDR_THREADS caps it."""
    w = requested if requested and requested > 0 else (os.cpu_count() or 1)
    cap = os.environ.get("SDR_THREADS", "").strip()
    if cap:
        w = min(w, max(1, int(cap)))
    return max(1, w)


def build_family(kind: str, m: int, s: int, rng: np.random.Generator,
                 y: np.ndarray | None = None) -> FunctionFamily:
    """Construct a family of the given kind sized by the ensemble parameter m.

    Data-adaptive kinds (slice, kde) need the response sample to place
    their thresholds or centers.
    """
    if kind == "cf":
        return sample_cf_family(s, m, rng)
    if kind == "boxcox":
        return boxcox_family()
    if kind == "haar":
        level = max(1, math.ceil(math.log2(m + 1)) - 1)
        return haar_family(level)
    if kind == "identity":
        return identity_family()
    if kind == "poly":
        return poly_family(range(1, m + 1))
    if y is None:
        raise ValueError(f"family kind {kind!r} needs the response sample")
    y = np.asarray(y, dtype=float).ravel()
    if kind == "slice":
        return slice_family(default_slice_thresholds(y, m))
    if kind == "kde":
        centers = default_slice_thresholds(y, m)
        sd = y.std(ddof=1)
        iqr = np.subtract(*np.percentile(y, [75, 25]))
        width = 0.9 * min(sd, iqr / 1.34 if iqr > 0 else sd) * y.size ** (-0.2)
        return kde_family(centers, np.full(m, max(width, 1e-12)))
    raise ValueError(f"unknown family kind {kind!r}")


def _prepare_panel(family: FunctionFamily, Y: np.ndarray):
    notes = []
    if family.kind == "boxcox" and (np.asarray(Y) <= 0).any():
        Y = shift_nonneg(Y)
        notes.append("responses shifted to min 0.5 before the power transforms")
    return evaluate(family, Y), notes


def fit_subspace(X: np.ndarray, Y: np.ndarray, d: int, cfg: FitConfig,
                 family: FunctionFamily, method: str = "rmave",
                 standardize: bool = True) -> tuple[EnsembleFit, dict]:
    """Full fit pipeline on raw data; returns the fit in raw predictor scale.

    Standardizes the predictors (unless disabled), evaluates the family,
    runs the requested estimator chain, and maps the basis back to the
    input coordinates.
    """
    errors = validate_config(cfg)
    if errors:
        raise ValueError("invalid config: " + "; ".join(errors))
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    X = np.asarray(X, dtype=float)
    if standardize:
        Z, rec = standardize_predictors(X)
    else:
        Z, rec = X, None
    panel, notes = _prepare_panel(family, Y)
    if method == "opg":
        fit = opg_ensemble(Z, panel, d, cfg)
    elif method == "mave":
        fit = mave_ensemble(Z, panel, d, cfg)
    else:
        fit = rmave_ensemble(Z, panel, d, cfg)
    if standardize:
        raw = unstandardize_directions(fit.basis.B, rec)
        fit = replace(fit, basis=orthonormalize(raw))
    extras = {"notes": notes, "panel_width": panel.q, "standardized": standardize}
    return fit, extras


@dataclass(frozen=True)
class RunSetting:
    """One aggregate row of an experiment: a model, sizes, and an estimator."""

    label: str
    model: str
    n: int
    p: int
    m: int
    method: str
    family: str
    task: str            # "delta" or "order"
    norm: str = "operator"
    x_value: float | None = None     # series coordinate for fig outputs


@dataclass(frozen=True)
class ExperimentSpec:
    """A named experiment plus overrides; expanded to concrete settings."""

    experiment: str
    replicates: int = 20
    seed: int = 0
    model: str | None = None
    n: int | None = None
    p: int | None = None
    m: int | None = None
    n_list: tuple | None = None
    m_list: tuple | None = None
    method: str = "rmave"
    family: str = "cf"
    dim: int | None = None
    kernel: str = "biweight"
    standardize: bool = True
    trim_quantile: float = 0.05
    varsigma: float = 0.75
    workers: int | None = None

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")


def expand_settings(spec: ExperimentSpec) -> tuple[RunSetting, ...]:
    """Concrete per-row settings for the named experiment."""
    out: list[RunSetting] = []

    def add(model, n, p=None, m=None, method=None, family=None, task="delta",
            norm="operator", x_value=None, label=None):
        info = _MODEL_INFO[model]
        p = p if p is not None else (spec.p or info.default_p)
        m = m if m is not None else (spec.m or info.default_m)
        method = method or spec.method
        family = family or spec.family
        label = label or f"{model}/n={n}/p={p}/m={m}/{method}-{family}"
        out.append(RunSetting(label=label, model=model, n=n, p=p, m=m,
                              method=method, family=family, task=task,
                              norm=norm, x_value=x_value))

    ex = spec.experiment
    if ex in ("table1", "table2"):
        model = "ex2" if ex == "table1" else "ex3"
        n = spec.n or 400
        for fam in ([spec.family] if spec.family != "cf" else ["cf", "boxcox", "identity"]):
            add(model, n, family=fam)
    elif ex == "table3":
        models = [spec.model] if spec.model else ["modelA", "modelB", "modelC"]
        ns = spec.n_list or ((spec.n,) if spec.n else (100, 200, 400))
        for model in models:
            for n in ns:
                add(model, int(n), task="order")
    elif ex == "table4":
        models = [spec.model] if spec.model else ["modelD", "modelE", "modelF", "modelG"]
        n = spec.n or 400
        for model in models:
            add(model, n)
    elif ex == "table5":
        n = spec.n or 400
        for fam in ([spec.family] if spec.family != "cf" else ["cf", "identity"]):
            add("ex6", n, family=fam)
    elif ex == "fig1":
        n = spec.n or 400
        ms = spec.m_list or (5, 10, 15, 20, 30, 40, 50)
        for m in ms:
            add("ex1", n, m=int(m), x_value=float(m))
    elif ex == "fig2":
        ns = spec.n_list or (100, 200, 300, 400, 500)
        for n in ns:
            add("modelD", int(n), x_value=1.0 / math.sqrt(n))
    elif ex == "ex8":
        add("ex8", spec.n or 100, norm="frobenius")
    else:
        if not spec.model:
            raise ValueError("custom experiment needs --model")
        info = _MODEL_INFO.get(spec.model)
        if info is None:
            raise ValueError(f"unknown model {spec.model!r}")
        add(spec.model, spec.n or info.default_n,
            task="order" if spec.dim == -1 else "delta")
    return tuple(out)


def _config_for(spec: ExperimentSpec, m: int) -> FitConfig:
    return FitConfig(m=m, kernel=spec.kernel, trim_quantile=spec.trim_quantile,
                     varsigma=spec.varsigma, seed=spec.seed)


def run_replicate(spec: ExperimentSpec, setting: RunSetting, rep: int) -> dict:
    """Run one replicate; derives all randomness from (spec.seed, rep).

    The data seed depends only on the replicate index, so different
    settings (family, method, ensemble size) see paired datasets.
    """
    data_seed = child_seed(spec.seed, rep, 0)
    fam_rng = substream(spec.seed, rep, 1)
    info = _MODEL_INFO[setting.model]
    row = {"setting": setting.label, "model": setting.model, "n": setting.n,
           "p": setting.p, "m": setting.m, "method": setting.method,
           "family": setting.family, "replicate": rep, "seed": data_seed,
           "value": float("nan"), "converged": False, "error": ""}
    try:
        ds, b0 = generate(ModelSpec(name=setting.model, n=setting.n,
                                    p=setting.p, seed=data_seed))
        cfg = _config_for(spec, setting.m)
        family = build_family(setting.family, setting.m, ds.s, fam_rng,
                              y=ds.Y[:, 0] if ds.s == 1 else None)
        if setting.task == "order":
            Z, _ = standardize_predictors(ds.X) if spec.standardize else (ds.X, None)
            curve = estimate_dimension(Z, ds.Y, family, cfg)
            row["value"] = float(curve.d_hat)
            row["correct"] = bool(curve.d_hat == info.d0)
            row["converged"] = not curve.fit_errors
        else:
            fit, _ = fit_subspace(ds.X, ds.Y, info.d0, cfg, family,
                                  method=setting.method,
                                  standardize=spec.standardize)
            row["value"] = distance(fit.basis, b0, norm=setting.norm)
            row["converged"] = fit.converged
    except Exception as exc:  # recorded, not fatal: the table reports failures
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _worker(args) -> dict:
    spec, setting, rep = args
    return run_replicate(spec, setting, rep)


@dataclass(frozen=True)
class ResultTable:
    """Aggregated experiment output plus the raw per-replicate records."""

    experiment: str
    rows: tuple
    replicates: tuple
    config: dict
    runtime_seconds: float

    @property
    def n_failed(self) -> int:
        return sum(1 for r in self.replicates if r["error"])


def _aggregate(setting: RunSetting, rows: list[dict]) -> dict:
    ok = [r for r in rows if not r["error"]]
    values = np.array([r["value"] for r in ok], dtype=float)
    out = {"setting": setting.label, "model": setting.model, "n": setting.n,
           "p": setting.p, "m": setting.m, "method": setting.method,
           "family": setting.family, "task": setting.task, "norm": setting.norm,
           "n_ok": len(ok), "n_failed": len(rows) - len(ok)}
    if setting.x_value is not None:
        out["x"] = setting.x_value
    if setting.task == "order":
        correct = np.array([r.get("correct", False) for r in ok], dtype=float)
        out["fraction_correct"] = float(correct.mean()) if len(ok) else float("nan")
        out["mean"] = float(values.mean()) if len(ok) else float("nan")
    else:
        out["mean"] = float(values.mean()) if len(ok) else float("nan")
        out["sd"] = float(values.std(ddof=1)) if len(ok) > 1 else float("nan")
    return out


def run_experiment(spec: ExperimentSpec, workers: int | None = None) -> ResultTable:
    """Run every setting of the experiment for the configured replicates."""
    t0 = time.perf_counter()
    settings = expand_settings(spec)
    tasks = [(spec, s, rep) for s in settings for rep in range(spec.replicates)]
    nworkers = resolve_workers(workers if workers is not None else spec.workers)
    if nworkers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            results = list(pool.map(_worker, tasks, chunksize=1))
    else:
        results = [_worker(t) for t in tasks]
    rows = []
    for i, s in enumerate(settings):
        block = results[i * spec.replicates:(i + 1) * spec.replicates]
        rows.append(_aggregate(s, block))
    cfg_echo = asdict(spec)
    cfg_echo["workers_used"] = nworkers
    return ResultTable(experiment=spec.experiment, rows=tuple(rows),
                       replicates=tuple(results), config=cfg_echo,
                       runtime_seconds=time.perf_counter() - t0)


_REPLICATE_FIELDS = ("setting", "model", "n", "p", "m", "method", "family",
                     "replicate", "seed", "value", "correct", "converged", "error")


def write_outputs(table: ResultTable, out_dir, basename: str | None = None) -> dict:
    """Write summary CSV + JSON and the per-replicate CSV; returns the paths.

    All numeric cells use shortest round-trip float formatting, so the
    aggregate statistics are exactly recomputable from the replicate file.
    Volatile fields (wall time, creation time) live under the single
    "timestamp" key of the JSON summary.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = basename or table.experiment
    paths = {
        "replicates": out_dir / f"{base}_replicates.csv",
        "summary_csv": out_dir / f"{base}_summary.csv",
        "summary_json": out_dir / f"{base}_summary.json",
    }
    with open(paths["replicates"], "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=_REPLICATE_FIELDS, extrasaction="ignore")
        w.writeheader()
        for r in table.replicates:
            w.writerow({k: (repr(v) if isinstance(v, float) else v)
                        for k, v in r.items()})
    row_fields = sorted({k for row in table.rows for k in row})
    with open(paths["summary_csv"], "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=row_fields, extrasaction="ignore")
        w.writeheader()
        for row in table.rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v)
                        for k, v in row.items()})
    payload = {
        "experiment": table.experiment,
        "config": table.config,
        "rows": list(table.rows),
        "n_failed": table.n_failed,
        "timestamp": {
            "created": datetime.now(timezone.utc).isoformat(),
            "runtime_seconds": table.runtime_seconds,
        },
    }
    with open(paths["summary_json"], "w") as fh:
        json.dump(payload, fh, indent=2, default=str)
        fh.write("\n")
    return paths


def format_table(table: ResultTable) -> str:
    """Human-readable summary for stdout."""
    lines = [f"experiment: {table.experiment}   "
             f"(replicates={table.config['replicates']}, seed={table.config['seed']})"]
    for row in table.rows:
        if row["task"] == "order":
            stat = f"correct d fraction = {row['fraction_correct']:.2f}"
        else:
            sd = row.get("sd", float("nan"))
            stat = f"mean delta = {row['mean']:.4f} +/- {sd:.4f}"
        fails = f"   failures={row['n_failed']}" if row["n_failed"] else ""
        lines.append(f"  {row['setting']:<44} {stat}{fails}")
    if table.n_failed:
        lines.append(f"  [{table.n_failed} replicate(s) failed; see replicates file]")
    return "\n".join(lines)
