"""Seeded generators for the benchmark regression models.

Each model produces a predictor matrix, a response, and the true basis of
the target subspace. The response depends on the predictors only through
the span of that basis, which the tests verify by regenerating Y from the
projected predictors with the same noise draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Dataset, substream
from .subspace import Basis, orthonormalize

__all__ = ["ModelSpec", "ModelInfo", "generate", "list_models", "MODEL_NAMES"]


def _ar_cov(p: int, rho: float = 0.5) -> np.ndarray:
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def _e(p: int, *ones: int, coef=None) -> np.ndarray:
    v = np.zeros(p)
    for w, i in zip(coef or [1.0] * len(ones), ones):
        v[i] = w
    return v


@dataclass(frozen=True)
class ModelSpec:
    """A named benchmark model at a concrete sample size and dimension."""

    name: str
    n: int
    p: int | None = None
    seed: int = 0


@dataclass(frozen=True)
class ModelInfo:
    name: str
    d0: int
    s: int
    default_n: int
    default_p: int
    default_m: int
    description: str


@dataclass(frozen=True)
class _ModelDef:
    info: ModelInfo
    x_cov: str                      # "ar" or "iso"
    min_p: int
    fixed_p: int | None
    directions: Callable            # p -> raw (p, d0) direction matrix
    draw_noise: Callable            # (n, rng) -> dict of noise arrays
    compose: Callable               # (X, noise, p) -> Y


def _additive(mean_fn, scale: float):
    def draw(n, rng):
        return {"eps": rng.standard_normal(n)}

    def compose(X, noise, p):
        return mean_fn(X) + scale * noise["eps"]

    return draw, compose


def _def_cos():
    return _additive(lambda X: np.cos(2.0 * X[:, 0]) - np.cos(X[:, 1]), 0.2)


def _def_inverse_index():
    def mean(X):
        return 1.0 / (X[:, :4].sum(axis=1))
    return _additive(mean, 0.2)


def _ratio_mean(X):
    return X[:, 0] / (0.5 + (X[:, 1] + 1.5) ** 2)


def _def_ex2():
    def draw(n, rng):
        return {"eps": rng.standard_normal(n)}

    def compose(X, noise, p):
        return _ratio_mean(X) + X[:, 2] * noise["eps"]

    return draw, compose


def _def_modelC():
    def draw(n, rng):
        return {"eps": rng.standard_normal(n)}

    def compose(X, noise, p):
        return _ratio_mean(X) + (X[:, 2] ** 2) * noise["eps"]

    return draw, compose


def _def_ex3():
    def draw(n, rng):
        return {"eps": rng.standard_normal(n)}

    def compose(X, noise, p):
        z = 0.2 * noise["eps"]
        u1 = X[:, :4].sum(axis=1) + z
        u2 = X[:, p - 4:].sum(axis=1) + z
        return (u1 > 1.0).astype(float) + 2.0 * (u2 > 0.0).astype(float)

    return draw, compose


def _def_modelE():
    def draw(n, rng):
        return {"eps": rng.standard_normal(n)}

    def compose(X, noise, p):
        return 0.1 * (X[:, :4].sum(axis=1) + noise["eps"]) ** 3

    return draw, compose


def _def_modelF():
    def draw(n, rng):
        return {"eps": rng.standard_normal(n)}

    def compose(X, noise, p):
        idx = X[:, 0] + 0.5 * X[:, 1] + X[:, 2]
        return np.exp(idx) * noise["eps"]

    return draw, compose


def _def_modelG():
    def draw(n, rng):
        r1, r2 = rng.spawn(2)
        return {"eps1": r1.standard_normal(n), "eps2": r2.standard_normal(n)}

    def compose(X, noise, p):
        return (np.sign(2.0 * X[:, 0] + noise["eps1"])
                * np.log(np.abs(2.0 * X[:, 1] + 4.0 + noise["eps2"])))

    return draw, compose


def _def_ex6():
    return _additive(
        lambda X: np.arcsin(1.0 / (1.0 + np.abs(0.5 + X[:, 0]))), 0.2)


_EX8_SIGMA = np.zeros((5, 5))
_EX8_SIGMA[:2, :2] = [[1.0, -0.5], [-0.5, 0.5]]
_EX8_SIGMA[2:, 2:] = np.diag([0.5, 1.0 / 3.0, 0.25])


def _def_ex8():
    chol = np.linalg.cholesky(_EX8_SIGMA)

    def draw(n, rng):
        return {"eps": rng.standard_normal((n, 5)) @ chol.T}

    def compose(X, noise, p):
        e = noise["eps"]
        Y = np.empty((X.shape[0], 5))
        Y[:, 0] = X[:, 1] + 3.0 * X[:, 1] / (0.5 + (X[:, 0] + 1.5) ** 2) + e[:, 0]
        Y[:, 1] = X[:, 0] + np.exp(0.5 * X[:, 1]) + e[:, 1]
        Y[:, 2] = X[:, 0] + X[:, 1] + e[:, 2]
        Y[:, 3] = e[:, 3]
        Y[:, 4] = e[:, 4]
        return Y

    return draw, compose


def _build_registry() -> dict[str, _ModelDef]:
    reg: dict[str, _ModelDef] = {}

    def add(name, d0, x_cov, min_p, directions, factory, s=1,
            default_n=400, default_p=10, default_m=15, fixed_p=None,
            description=""):
        draw, compose = factory()
        reg[name] = _ModelDef(
            info=ModelInfo(name=name, d0=d0, s=s, default_n=default_n,
                           default_p=fixed_p or default_p,
                           default_m=default_m, description=description),
            x_cov=x_cov, min_p=min_p, fixed_p=fixed_p,
            directions=directions, draw_noise=draw, compose=compose)

    first2 = lambda p: np.eye(p)[:, :2]
    first3 = lambda p: np.eye(p)[:, :3]
    beta14 = lambda p: _e(p, 0, 1, 2, 3)[:, None]

    add("ex1", 2, "ar", 2, first2, _def_cos,
        description="cos(2x1) - cos(x2) + 0.2 eps")
    add("ex2", 3, "ar", 3, first3, _def_ex2,
        description="x1/(0.5+(x2+1.5)^2) + x3 eps")
    add("ex3", 2, "iso", 8,
        lambda p: np.column_stack([_e(p, 0, 1, 2, 3), _e(p, p - 4, p - 3, p - 2, p - 1)]),
        _def_ex3, description="two-threshold discrete response, sigma = 0.2")
    add("modelA", 1, "ar", 4, beta14, _def_inverse_index,
        description="(x'beta)^{-1} + 0.2 eps, beta = e1+...+e4")
    add("modelB", 2, "ar", 2, first2, _def_cos,
        description="cos(2x1) - cos(x2) + 0.2 eps")
    add("modelC", 3, "ar", 3, first3, _def_modelC,
        description="x1/(0.5+(x2+1.5)^2) + x3^2 eps")
    add("modelD", 1, "ar", 4, beta14, _def_inverse_index,
        description="(x'beta)^{-1} + 0.2 eps, beta = e1+...+e4")
    add("modelE", 1, "ar", 4, beta14, _def_modelE,
        description="0.1 (x'beta + eps)^3, beta = e1+...+e4")
    add("modelF", 1, "ar", 3,
        lambda p: _e(p, 0, 1, 2, coef=[1.0, 0.5, 1.0])[:, None], _def_modelF,
        description="exp(x'beta) * eps, beta = e1 + 0.5 e2 + e3")
    add("modelG", 2, "ar", 2, first2, _def_modelG,
        description="sign(2x1+eps1) * log|2x2+4+eps2|")
    add("ex6", 1, "ar", 1, lambda p: np.eye(p)[:, :1], _def_ex6,
        description="arcsin(1/(1+|0.5+x1|)) + 0.2 eps")
    add("ex8", 2, "iso", 6, first2, _def_ex8, s=5, default_n=100,
        default_m=15000, fixed_p=6,
        description="five-dimensional response, p = 6 fixed")
    return reg


_MODELS = _build_registry()
MODEL_NAMES = tuple(_MODELS)


def list_models() -> tuple[ModelInfo, ...]:
    """Catalog of the available benchmark models with their defaults."""
    return tuple(m.info for m in _MODELS.values())


def _resolve(spec: ModelSpec) -> tuple[_ModelDef, int]:
    try:
        mdef = _MODELS[spec.name]
    except KeyError:
        raise ValueError(f"unknown model {spec.name!r}; see list_models()") from None
    p = spec.p if spec.p is not None else mdef.info.default_p
    if mdef.fixed_p is not None and p != mdef.fixed_p:
        raise ValueError(f"model {spec.name} requires p = {mdef.fixed_p}")
    if p < mdef.min_p:
        raise ValueError(f"model {spec.name} requires p >= {mdef.min_p}, got {p}")
    return mdef, p


def _draw_x(mdef: _ModelDef, n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((n, p))
    if mdef.x_cov == "ar":
        return Z @ np.linalg.cholesky(_ar_cov(p)).T
    return Z


def generate(spec: ModelSpec) -> tuple[Dataset, Basis]:
    """Generate one seeded dataset and the true basis for the named model."""
    ds, basis, _ = generate_with_parts(spec)
    return ds, basis


def generate_with_parts(spec: ModelSpec):
    """Like generate, but also returns the noise draws used to build Y."""
    mdef, p = _resolve(spec)
    rng = substream(spec.seed)
    x_rng, e_rng = rng.spawn(2)
    X = _draw_x(mdef, spec.n, p, x_rng)
    noise = mdef.draw_noise(spec.n, e_rng)
    Y = mdef.compose(X, noise, p)
    basis = orthonormalize(mdef.directions(p))
    return Dataset(X=X, Y=Y), basis, noise


def recompose(name: str, X: np.ndarray, noise: dict, p: int) -> np.ndarray:
    """Rebuild Y from predictors and stored noise; used to test that the
    response depends on X only through the true subspace."""
    return _MODELS[name].compose(np.asarray(X, dtype=float), noise, p)
