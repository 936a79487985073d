"""Shared data model, fit configuration, standardization, and seeding.

Everything here is immutable after construction and safe to share across
threads. Randomness is funneled through a single root seed from which
deterministic sub-streams are derived, so replicate-level parallelism
cannot change results.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "Dataset",
    "StandardizeRecord",
    "FitConfig",
    "standardize_predictors",
    "unstandardize_directions",
    "validate_config",
    "substream",
    "child_seed",
    "readonly",
]

KERNEL_KINDS = ("biweight", "gaussian")


def readonly(a: np.ndarray) -> np.ndarray:
    """Return a float64 C-contiguous copy with the writeable flag cleared."""
    out = np.array(a, dtype=float, order="C")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """A predictor/response sample: X is n x p, Y is n x s.

    Y may be passed one-dimensional; it is stored as a column matrix.
    Construction validates finiteness, shape consistency, and n >= p + 2.
    """

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.ndim != 2:
            raise ValueError("Y must be a 1-d or 2-d array")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(
                f"X and Y row counts differ: {X.shape[0]} vs {Y.shape[0]}"
            )
        if not np.isfinite(X).all() or not np.isfinite(Y).all():
            raise ValueError("dataset contains non-finite entries")
        if X.shape[0] < X.shape[1] + 2:
            raise ValueError(
                f"need n >= p + 2, got n={X.shape[0]}, p={X.shape[1]}"
            )
        object.__setattr__(self, "X", readonly(X))
        object.__setattr__(self, "Y", readonly(Y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def s(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class StandardizeRecord:
    """Column means and sds used to standardize predictors.

    Keeps enough information to map fitted directions back to the raw
    predictor scale; sds are strictly positive.
    """

    mu: np.ndarray
    sd: np.ndarray
    applied: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "mu", readonly(self.mu))
        object.__setattr__(self, "sd", readonly(self.sd))
        if self.applied and not (self.sd > 0).all():
            raise ValueError("standardization sds must be strictly positive")


def standardize_predictors(X: np.ndarray) -> tuple[np.ndarray, StandardizeRecord]:
    """Center each predictor column and scale it to unit sample sd.

    Returns the standardized matrix and the record needed to undo the map.
    Raises on constant columns.
    """
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    if not (sd > 0).all():
        bad = np.flatnonzero(sd <= 0)
        raise ValueError(f"degenerate predictor column(s) {bad.tolist()}: zero variance")
    Z = (X - mu) / sd
    return Z, StandardizeRecord(mu=mu, sd=sd, applied=True)


def unstandardize_directions(M: np.ndarray, rec: StandardizeRecord) -> np.ndarray:
    """Map direction vectors fitted on standardized predictors back to raw scale.

    A direction b in standardized coordinates corresponds to b / sd in raw
    coordinates (spans only; the caller re-orthonormalizes).
    """
    if not rec.applied:
        return np.asarray(M, dtype=float)
    return np.asarray(M, dtype=float) / rec.sd[:, None]


@dataclass(frozen=True)
class FitConfig:
    """Tuning constants shared by all estimators.

    m: ensemble size (number of sampled response transformations).
    varsigma: bandwidth decay factor, in (1/2, 1).
    tol: stop when the projection-matrix change drops below this.
    kernel: "biweight" (compact support) or "gaussian".
    c0 / hbar0: constants for the initial (p-dimensional) and final
        (d-dimensional) bandwidth rates.
    trim_quantile: density quantile below which observations are trimmed.
    ridge: relative ridge added to numerically singular local systems.
    """

    m: int = 15
    varsigma: float = 0.75
    tol: float = 1e-6
    max_inner_iter: int = 50
    max_outer_iter: int = 30
    kernel: str = "biweight"
    c0: float = 2.34
    hbar0: float = 2.34
    trim_quantile: float = 0.05
    ridge: float = 1e-10
    seed: int = 0

    def with_(self, **kw) -> "FitConfig":
        return replace(self, **kw)


def validate_config(cfg: FitConfig) -> list[str]:
    """Return a list of invariant violations (empty when the config is valid)."""
    errors: list[str] = []
    if cfg.m < 1:
        errors.append("ensemble size must be >= 1")
    if not (0.5 < cfg.varsigma < 1.0):
        errors.append("varsigma out of (1/2,1)")
    if not cfg.tol > 0:
        errors.append("tol must be > 0")
    if cfg.max_inner_iter < 1:
        errors.append("max_inner_iter must be >= 1")
    if cfg.max_outer_iter < 1:
        errors.append("max_outer_iter must be >= 1")
    if cfg.kernel not in KERNEL_KINDS:
        errors.append(f"kernel must be one of {KERNEL_KINDS}")
    if not cfg.c0 > 0:
        errors.append("c0 must be > 0")
    if not cfg.hbar0 > 0:
        errors.append("hbar0 must be > 0")
    if not (0.0 <= cfg.trim_quantile < 0.5):
        errors.append("trim_quantile out of [0, 0.5)")
    if cfg.ridge < 0:
        errors.append("ridge must be >= 0")
    return errors


_MASK64 = (1 << 64) - 1


def substream(seed: int, *path: int) -> np.random.Generator:
    """Deterministic generator for the sub-stream identified by ``path``.

    Distinct paths give statistically independent streams; the same
    (seed, path) always reproduces the same stream, independent of any
    other stream that was drawn from.
    """
    entropy = [int(seed) & _MASK64] + [int(k) & _MASK64 for k in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def child_seed(seed: int, *path: int) -> int:
    """Derive a 64-bit integer seed for the sub-stream identified by ``path``."""
    entropy = [int(seed) & _MASK64] + [int(k) & _MASK64 for k in path]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])
