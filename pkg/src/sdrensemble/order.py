"""Cross-validated selection of the structural dimension.

For each candidate dimension d a basis is fitted and every panel column is
predicted at each observation by a leave-one-out kernel smoother over the
projected predictors; the averaged squared prediction error CV(d) is
minimized over d = 0..d_max, with d = 0 scored by leave-one-out means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FitConfig
from .families import FunctionFamily, ResponsePanel, evaluate
from .estimators import rmave_ensemble
from .smoothing import bandwidth_final, get_kernel
from .subspace import Basis

__all__ = ["CvCurve", "cv_value", "estimate_dimension"]

_TIE_TOL = 1e-12


@dataclass(frozen=True)
class CvCurve:
    """CV(d) over d = 0..d_max with the argmin and per-d diagnostics."""

    values: tuple
    d_hat: int
    bandwidths: tuple
    fallback_counts: tuple
    fit_errors: tuple

    @property
    def d_max(self) -> int:
        return len(self.values) - 1


def _loo_means(G: np.ndarray) -> np.ndarray:
    n = G.shape[0]
    return (G.sum(axis=0)[None, :] - G) / (n - 1)


def _cv_smoother(X: np.ndarray, G: np.ndarray, basis: Basis, hbar: float,
                 kernel) -> tuple[np.ndarray, int]:
    """Leave-one-out kernel-regression predictions of every panel column.

    Anchors whose leave-one-out denominator vanishes (possible under a
    compact-support kernel) fall back to the dimension-0 predictor.
    """
    U = X @ basis.B
    sq = np.sum(U * U, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (U @ U.T), 0.0)
    K = kernel.profile(np.sqrt(d2) / hbar)
    np.fill_diagonal(K, 0.0)
    denom = K.sum(axis=0)
    ok = denom > 0
    mu = np.empty_like(G)
    if ok.any():
        mu[ok] = (K[:, ok].T @ G) / denom[ok, None]
    n_fallback = int((~ok).sum())
    if n_fallback:
        mu[~ok] = _loo_means(G)[~ok]
    return mu, n_fallback


def cv_value(X: np.ndarray, panel: ResponsePanel, d: int,
             cfg: FitConfig = FitConfig()) -> float:
    """Cross-validation score of working dimension d.

    For d >= 1 the basis is fitted by the refined alternating estimator at
    dimension d, then scored by the leave-one-out smoother at the final
    d-dimensional bandwidth. The score is the mean squared leave-one-out
    error over all n rows and all panel columns.
    """
    value, _ = _cv_value_detailed(np.asarray(X, dtype=float), panel, d, cfg)
    return value


def _cv_value_detailed(X: np.ndarray, panel: ResponsePanel, d: int,
                       cfg: FitConfig) -> tuple[float, int]:
    G = panel.G
    if d == 0:
        mu = _loo_means(G)
        return float(np.mean((G - mu) ** 2)), 0
    fit = rmave_ensemble(X, panel, d, cfg)
    hbar = bandwidth_final(X.shape[0], d, cfg.hbar0)
    mu, n_fallback = _cv_smoother(X, G, fit.basis, hbar, get_kernel(cfg.kernel))
    return float(np.mean((G - mu) ** 2)), n_fallback


def estimate_dimension(X: np.ndarray, Y: np.ndarray, family: FunctionFamily,
                       cfg: FitConfig = FitConfig(),
                       d_max: int | None = None) -> CvCurve:
    """Estimate the structural dimension by minimizing CV(d) over d = 0..d_max.

    Ties within 1e-12 resolve to the smaller dimension. A candidate whose
    fit fails is recorded and scored +inf.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if d_max is None:
        d_max = min(p, 6)
    if not 0 < d_max <= p:
        raise ValueError(f"need 1 <= d_max <= p, got {d_max}")
    panel = evaluate(family, Y)
    values: list[float] = []
    fallbacks: list[int] = []
    errors: list[str] = []
    for d in range(d_max + 1):
        try:
            value, n_fallback = _cv_value_detailed(X, panel, d, cfg)
        except (ValueError, np.linalg.LinAlgError) as exc:
            value, n_fallback = np.inf, 0
            errors.append(f"d={d}: {exc}")
        values.append(value)
        fallbacks.append(n_fallback)
    vmin = min(values)
    d_hat = next(d for d, v in enumerate(values) if v <= vmin + _TIE_TOL)
    bandwidths = tuple(bandwidth_final(n, d, cfg.hbar0) if d else np.nan
                       for d in range(d_max + 1))
    return CvCurve(values=tuple(values), d_hat=d_hat, bandwidths=bandwidths,
                   fallback_counts=tuple(fallbacks), fit_errors=tuple(errors))
