"""Kernels, local weight plans, trimming, and bandwidth rules.

Weights are column-normalized: W[i, j] is the weight observation i carries
in the local fit anchored at observation j, and each column sums to 1.
Trimming weights rho_j downweight anchors sitting in low-density regions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import readonly
from .subspace import Basis

__all__ = [
    "KernelSpec",
    "WeightPlan",
    "get_kernel",
    "full_weights",
    "refined_weights",
    "trimming",
    "bandwidth_initial",
    "bandwidth_final",
    "bandwidth_schedule",
]


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric univariate density profile K0 applied to ||v|| / h."""

    kind: str

    def profile(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "biweight":
            t = 1.0 - u * u
            return np.where(np.abs(u) <= 1.0, (15.0 / 16.0) * t * t, 0.0)
        if self.kind == "gaussian":
            return np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
        raise ValueError(f"unknown kernel {self.kind!r}")

    @property
    def compact_support(self) -> bool:
        return self.kind == "biweight"


_KERNELS = {"biweight": KernelSpec("biweight"), "gaussian": KernelSpec("gaussian")}


def get_kernel(kind: str) -> KernelSpec:
    try:
        return _KERNELS[kind]
    except KeyError:
        raise ValueError(f"unknown kernel {kind!r}") from None


@dataclass(frozen=True)
class WeightPlan:
    """Column-normalized local weights plus trimming for one bandwidth.

    flagged marks anchor columns with no neighbor mass besides the anchor
    itself (possible under a compact-support kernel); such columns are set
    to the indicator at i = j and their rho is forced to 0.
    """

    W: np.ndarray
    rho: np.ndarray
    h: float
    dim: int
    flagged: np.ndarray
    densities: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "W", readonly(self.W))
        object.__setattr__(self, "rho", readonly(self.rho))
        object.__setattr__(self, "flagged", np.asarray(self.flagged, dtype=bool))
        object.__setattr__(self, "densities", readonly(self.densities))

    @property
    def n(self) -> int:
        return self.W.shape[0]


def _pairwise_norms(U: np.ndarray) -> np.ndarray:
    sq = np.sum(U * U, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (U @ U.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def _plan_from_coords(U: np.ndarray, h: float, kernel: KernelSpec,
                      trim_quantile: float) -> WeightPlan:
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    n, dim = U.shape
    K = kernel.profile(_pairwise_norms(U) / h) * h ** (-dim)
    densities = K.mean(axis=0)
    colsum = K.sum(axis=0)
    off_diag = colsum - np.diag(K)
    flagged = off_diag <= 0.0
    W = np.empty_like(K)
    safe = ~flagged
    W[:, safe] = K[:, safe] / colsum[safe]
    if flagged.any():
        W[:, flagged] = 0.0
        W[np.flatnonzero(flagged), np.flatnonzero(flagged)] = 1.0
    rho = trimming(densities, trim_quantile)
    rho = np.where(flagged, 0.0, rho)
    return WeightPlan(W=W, rho=rho, h=float(h), dim=dim,
                      flagged=flagged, densities=densities)


def full_weights(X: np.ndarray, h: float, kernel: KernelSpec,
                 trim_quantile: float = 0.05) -> WeightPlan:
    """Weights from the p-dimensional kernel on raw predictor differences.

    W[i, j] = K_h(X_i - X_j) / sum_u K_h(X_u - X_j), diagonal included.
    """
    X = np.asarray(X, dtype=float)
    return _plan_from_coords(X, h, kernel, trim_quantile)


def refined_weights(X: np.ndarray, basis: Basis, h: float, kernel: KernelSpec,
                    trim_quantile: float = 0.05) -> WeightPlan:
    """Weights from the d-dimensional kernel on projected differences B'(X_i - X_j)."""
    X = np.asarray(X, dtype=float)
    return _plan_from_coords(X @ basis.B, h, kernel, trim_quantile)


def trimming(density_estimates: np.ndarray, quantile: float = 0.05) -> np.ndarray:
    """Smooth trimming weights from local density estimates.

    The cutoff v0 is the given empirical quantile of the estimates; rho
    ramps from 0 at v0 to 1 at 2 v0 through the smoothstep x^2 (3 - 2x).
    Estimates tied with v0 are trimmed (rho = 0), matching the convention
    that rho(v) > 0 only for v strictly above v0.
    """
    dens = np.asarray(density_estimates, dtype=float)
    if (dens < 0).any():
        raise ValueError("density estimates must be nonnegative")
    v0 = float(np.quantile(dens, quantile))
    if v0 <= 0:
        return (dens > 0).astype(float)
    x = np.clip((dens - v0) / v0, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def bandwidth_initial(n: int, p: int, c0: float = 2.34) -> float:
    """Pilot bandwidth for p-dimensional smoothing, c0 * n^(-1/(p+4))."""
    return float(c0 * n ** (-1.0 / (p + 4)))


def bandwidth_final(n: int, d: int, hbar0: float = 2.34) -> float:
    """Final bandwidth for d-dimensional smoothing, hbar0 * n^(-1/(d+4))."""
    return float(hbar0 * n ** (-1.0 / (d + 4)))


def bandwidth_schedule(h0: float, hbar: float, varsigma: float) -> list[float]:
    """Decreasing bandwidths h_r = max(varsigma * h_{r-1}, hbar), ending at hbar."""
    if not 0.5 < varsigma < 1.0:
        raise ValueError("varsigma out of (1/2,1)")
    seq: list[float] = []
    h = float(h0)
    while True:
        h = max(varsigma * h, hbar)
        seq.append(h)
        if h <= hbar:
            return seq
