"""Gradient-ensemble subspace estimators: OPG, MAVE, and refined MAVE.

All three minimize weighted local-linear objectives over the evaluated
response panel. The alternating estimators break the objective into two
exact least-squares blocks:

  local step   per anchor j, fit intercepts a_jk(l) and reduced gradients
               b_jk(l) against projected differences B'(X_i - X_j);
  global step  given all local fits, solve the Kronecker-structured normal
               equations for the p x d matrix B.

Both blocks have closed forms; alternation therefore never increases the
objective. The refined estimator re-derives the weights from the current
basis with a shrinking bandwidth schedule, smoothing over the projected
d-dimensional space instead of the raw p-dimensional one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import FitConfig
from .families import ResponsePanel
from .smoothing import (
    WeightPlan,
    bandwidth_final,
    bandwidth_initial,
    full_weights,
    get_kernel,
    refined_weights,
)
from .subspace import Basis, orthonormalize, projection

__all__ = [
    "LocalFit",
    "EnsembleFit",
    "opg_local_fits",
    "opg_ensemble",
    "mave_step_local",
    "mave_step_global",
    "objective",
    "mave_ensemble",
    "rmave_ensemble",
]

_SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class LocalFit:
    """Per-anchor least-squares solutions: a is (n, q), b is (n, q, d).

    Column index runs over the panel columns (member k, part l); d is the
    working dimension (p for the full-space OPG fits).
    """

    a: np.ndarray
    b: np.ndarray
    ridged: np.ndarray
    rss: np.ndarray


@dataclass(frozen=True)
class EnsembleFit:
    """A fitted basis plus convergence diagnostics."""

    basis: Basis
    objective_trace: tuple
    outer_bandwidths: tuple
    converged: bool
    n_outer: int
    n_inner: int
    method: str
    diagnostics: dict = field(default_factory=dict)


def _weighted_cross(W: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """T[j, a, :] = sum_i W[i, j] A[i, a] B[i, :], one BLAS product per a."""
    n, da = A.shape
    out = np.empty((n, da, B.shape[1]))
    for a in range(da):
        out[:, a, :] = (W * A[:, a, None]).T @ B
    return out


def _solve_local(U: np.ndarray, W: np.ndarray, G: np.ndarray,
                 ridge: float) -> LocalFit:
    """Solve the weighted local-linear systems for every anchor at once.

    The (d+1) x (d+1) Gram matrix at anchor j is shared by all panel
    columns, so it is factored once per anchor and reused across the q
    right-hand sides.
    """
    n, dd = U.shape
    q = G.shape[1]
    m1 = W.T @ U
    g0 = W.T @ G
    # uncentered cross moments, then recenter each anchor at U_j
    E2 = _weighted_cross(W, U, U)
    S2 = (E2
          - m1[:, :, None] * U[:, None, :]
          - U[:, :, None] * m1[:, None, :]
          + U[:, :, None] * U[:, None, :])
    c1 = m1 - U
    g1 = _weighted_cross(W, U, G) - U[:, :, None] * g0[:, None, :]

    A = np.empty((n, dd + 1, dd + 1))
    A[:, 0, 0] = 1.0
    A[:, 0, 1:] = c1
    A[:, 1:, 0] = c1
    A[:, 1:, 1:] = S2
    R = np.empty((n, dd + 1, q))
    R[:, 0, :] = g0
    R[:, 1:, :] = g1

    evals = np.linalg.eigvalsh(A)
    scale = np.maximum(evals[:, -1], np.finfo(float).tiny)
    ridged = evals[:, 0] <= _SINGULAR_RTOL * scale
    eps = np.zeros(n)
    if ridged.any():
        tr = np.trace(A[ridged], axis1=1, axis2=2)
        eps[ridged] = ridge * np.maximum(tr, 1.0)
        A[ridged] += eps[ridged, None, None] * np.eye(dd + 1)
    try:
        sol = np.linalg.solve(A, R)
    except np.linalg.LinAlgError:
        bad = [int(j) for j in range(n)
               if np.linalg.matrix_rank(A[j]) < dd + 1]
        raise ValueError(
            f"local least-squares system singular after ridge at anchors {bad[:10]}"
        ) from None
    a = sol[:, 0, :]
    b = np.ascontiguousarray(sol[:, 1:, :].transpose(0, 2, 1))
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("local least-squares solutions are non-finite")
    # per-anchor weighted RSS from the quadratic identity
    # rss_j = sum_k [ y'Wy - 2 th'R + th'A th ], A taken before the ridge
    g2w = (W.T @ (G * G)).sum(axis=1)
    quad = np.einsum("jdk,jdk->j", sol, A @ sol, optimize=True)
    quad -= eps * np.einsum("jdk,jdk->j", sol, sol, optimize=True)
    lin = np.einsum("jdk,jdk->j", sol, R, optimize=True)
    rss = np.maximum(g2w - 2.0 * lin + quad, 0.0)
    return LocalFit(a=a, b=b, ridged=ridged, rss=rss)


def opg_local_fits(X: np.ndarray, panel: ResponsePanel, plan: WeightPlan,
                   ridge: float = 1e-10) -> LocalFit:
    """Full-space local-linear fits: gradients live in R^p."""
    return _solve_local(np.asarray(X, dtype=float), plan.W, panel.G, ridge)


def mave_step_local(X: np.ndarray, panel: ResponsePanel, plan: WeightPlan,
                    basis: Basis, ridge: float = 1e-10) -> LocalFit:
    """Local block of the alternation: exact fits in the projected space."""
    U = np.asarray(X, dtype=float) @ basis.B
    return _solve_local(U, plan.W, panel.G, ridge)


@dataclass(frozen=True)
class _StageCache:
    """Weight-dependent moments reused by every global step of one stage."""

    Wr: np.ndarray        # W * rho, n x n
    rho: np.ndarray
    WtG: np.ndarray       # Wr' G, n x q
    Srho: np.ndarray      # rho_j * sum_i w_ij (X_i - X_j)(X_i - X_j)', n x p x p


def _stage_cache(X: np.ndarray, G: np.ndarray, plan: WeightPlan) -> _StageCache:
    W, rho = plan.W, plan.rho
    m1 = W.T @ X
    S = (_weighted_cross(W, X, X)
         - m1[:, :, None] * X[:, None, :]
         - X[:, :, None] * m1[:, None, :]
         + X[:, :, None] * X[:, None, :])
    Wr = W * rho[None, :]
    return _StageCache(Wr=Wr, rho=rho, WtG=Wr.T @ G,
                       Srho=S * rho[:, None, None])


def _global_solve(X: np.ndarray, G: np.ndarray, cache: _StageCache,
                  fits: LocalFit, ridge: float) -> np.ndarray:
    n, p = X.shape
    q, d = fits.b.shape[1:]
    C = np.einsum("jka,jkb->jab", fits.b, fits.b, optimize=True)
    A = np.einsum("jab,jcd->acbd", C, cache.Srho, optimize=True).reshape(d * p, d * p)

    # c[u, v] = sum_{i,j,k} Wr[i,j] b[j,k,u] (G[i,k] - a[j,k]) (X[i,v] - X[j,v]),
    # reduced to three thin products around one n x (qd) GEMM
    ab = np.einsum("jk,jku->ju", fits.a, fits.b, optimize=True)
    WB = (cache.Wr @ fits.b.reshape(n, q * d)).reshape(n, q, d)
    T3 = np.einsum("ik,iku->iu", G, WB, optimize=True)
    Rb = np.einsum("jk,jku->ju", cache.WtG, fits.b, optimize=True)
    c = ((T3 - cache.Wr @ ab - Rb + cache.rho[:, None] * ab).T @ X).ravel()

    evals = np.linalg.eigvalsh(A)
    scale = max(float(evals[-1]), np.finfo(float).tiny)
    if evals[0] <= _SINGULAR_RTOL * scale:
        A = A + ridge * max(np.trace(A), 1.0) * np.eye(d * p)
        evals = np.linalg.eigvalsh(A)
        if evals[0] <= 0 or not np.isfinite(evals).all():
            raise ValueError("global least-squares system singular after ridge")
    theta = np.linalg.solve(A, c)
    if not np.isfinite(theta).all():
        raise ValueError("global least-squares solution is non-finite")
    return theta.reshape(d, p).T


def mave_step_global(X: np.ndarray, panel: ResponsePanel, plan: WeightPlan,
                     fits: LocalFit, ridge: float = 1e-10) -> np.ndarray:
    """Global block of the alternation: exact minimizer over the p x d matrix.

    Solves the normal equations for vec(B) built from the Kronecker
    design b_jk(l) (x) (X_i - X_j); returns the raw (not orthonormalized)
    p x d solution.
    """
    X = np.asarray(X, dtype=float)
    return _global_solve(X, panel.G, _stage_cache(X, panel.G, plan), fits, ridge)


def objective(X: np.ndarray, panel: ResponsePanel, plan: WeightPlan,
              basis: Basis, fits: LocalFit) -> float:
    """Trimmed weighted residual sum of squares of the ensemble objective.

    Evaluated through the expanded square, so the cost is a handful of
    n x n matrix products instead of an n x n x q residual tensor.
    """
    X = np.asarray(X, dtype=float)
    G = panel.G
    U = X @ basis.B
    W, rho = plan.W, plan.rho
    Wr = W * rho[None, :]
    a, b = fits.a, fits.b
    d = b.shape[2]

    g2 = np.sum(G * G, axis=1)
    t1 = float(Wr.sum(axis=1) @ g2)
    t2 = float(np.sum(Wr * (G @ a.T)))
    t3 = 0.0
    for u in range(d):
        M_u = Wr * (G @ b[:, :, u].T)
        t3 += float(M_u.sum(axis=1) @ U[:, u] - M_u.sum(axis=0) @ U[:, u])
    t4 = float(rho @ np.sum(a * a, axis=1))
    c1 = W.T @ U - U
    ab = np.einsum("jk,jku->ju", a, b, optimize=True)
    t5 = float(np.sum(rho[:, None] * ab * c1))
    C = np.einsum("jka,jkb->jab", b, b, optimize=True)
    m1 = W.T @ U
    S2 = (_weighted_cross(W, U, U)
          - m1[:, :, None] * U[:, None, :]
          - U[:, :, None] * m1[:, None, :]
          + U[:, :, None] * U[:, None, :])
    t6 = float(rho @ np.einsum("jab,jab->j", C, S2, optimize=True))
    return t1 - 2.0 * t2 - 2.0 * t3 + t4 + 2.0 * t5 + t6


def _proj_change(P_old: np.ndarray, basis: Basis) -> tuple[float, np.ndarray]:
    P_new = projection(basis)
    gap = float(np.abs(np.linalg.eigvalsh(P_new - P_old)).max())
    return gap, P_new


def opg_ensemble(X: np.ndarray, panel: ResponsePanel, d: int,
                 cfg: FitConfig = FitConfig()) -> EnsembleFit:
    """Outer-product-of-gradients estimate of the target subspace.

    Averages the trimmed outer products of the local gradient estimates
    over anchors and panel columns and keeps the top-d eigenvectors.
    Eigenvalue ordering (descending) fixes the column order.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if not 1 <= d <= p:
        raise ValueError(f"need 1 <= d <= p, got d={d}")
    h0 = bandwidth_initial(n, p, cfg.c0)
    plan = full_weights(X, h0, get_kernel(cfg.kernel), cfg.trim_quantile)
    fits = opg_local_fits(X, panel, plan, cfg.ridge)
    M = np.einsum("j,jka,jkb->ab", plan.rho, fits.b, fits.b, optimize=True)
    if not M.any():
        warnings.warn("OPG matrix is identically zero; basis is arbitrary")
    evals, evecs = np.linalg.eigh(M)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    if d < p and evals[d - 1] - evals[d] <= 1e-12:
        warnings.warn("eigen-gap degenerate at the requested dimension")
    basis = Basis(evecs[:, :d])
    return EnsembleFit(
        basis=basis, objective_trace=(), outer_bandwidths=(h0,),
        converged=True, n_outer=1, n_inner=0, method="opg",
        diagnostics={"flagged_columns": int(plan.flagged.sum()),
                     "ridged_anchors": int(fits.ridged.sum()),
                     "eigenvalues": tuple(float(v) for v in evals)},
    )


def _alternate(X: np.ndarray, panel: ResponsePanel, plan: WeightPlan,
               basis: Basis, cfg: FitConfig):
    """Run the two-block alternation under a fixed weight plan.

    Returns (basis, trace, n_iter, converged, note). On a singular or
    rank-deficient update the best iterate seen so far is returned with
    converged False.
    """
    cache = _stage_cache(X, panel.G, plan)
    trace: list[float] = []
    best_obj = np.inf
    best_basis = basis
    converged = False
    note = ""
    it = 0
    for it in range(1, cfg.max_inner_iter + 1):
        fits = mave_step_local(X, panel, plan, basis, cfg.ridge)
        obj = float(plan.rho @ fits.rss)
        trace.append(obj)
        if obj < best_obj:
            best_obj, best_basis = obj, basis
        try:
            M = _global_solve(X, panel.G, cache, fits, cfg.ridge)
            new_basis = orthonormalize(M)
        except ValueError as exc:
            note = f"alternation stopped: {exc}"
            return best_basis, trace, it, False, note
        gap, _ = _proj_change(projection(basis), new_basis)
        basis = new_basis
        if gap < cfg.tol:
            converged = True
            break
    if not converged:
        basis = best_basis
        note = note or "inner alternation hit max_inner_iter"
    return basis, trace, it, converged, note


def mave_ensemble(X: np.ndarray, panel: ResponsePanel, d: int,
                  cfg: FitConfig = FitConfig(),
                  basis_init: Basis | None = None) -> EnsembleFit:
    """Alternating estimator with full-space weights at the pilot bandwidth.

    Initialized from the OPG ensemble unless a basis is supplied. Stops
    when the projection change drops below cfg.tol.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if not 1 <= d <= p:
        raise ValueError(f"need 1 <= d <= p, got d={d}")
    if basis_init is None:
        basis_init = opg_ensemble(X, panel, d, cfg).basis
    h0 = bandwidth_initial(n, p, cfg.c0)
    plan = full_weights(X, h0, get_kernel(cfg.kernel), cfg.trim_quantile)
    basis, trace, n_inner, converged, note = _alternate(X, panel, plan, basis_init, cfg)
    return EnsembleFit(
        basis=basis, objective_trace=tuple(trace), outer_bandwidths=(h0,),
        converged=converged, n_outer=1, n_inner=n_inner, method="mave",
        diagnostics={"flagged_columns": int(plan.flagged.sum()), "note": note},
    )


def rmave_ensemble(X: np.ndarray, panel: ResponsePanel, d: int,
                   cfg: FitConfig = FitConfig(),
                   basis_init: Basis | None = None) -> EnsembleFit:
    """Refined alternating estimator with a shrinking d-dimensional kernel.

    Outer stages follow h_r = max(varsigma * h_{r-1}, hbar) down from the
    pilot bandwidth; each stage recomputes the weights from the current
    basis (the kernel argument is frozen within a stage) and iterates the
    two-block alternation to tolerance. At the final bandwidth the outer
    loop continues until the projection change is below cfg.tol.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if not 1 <= d <= p:
        raise ValueError(f"need 1 <= d <= p, got d={d}")
    if basis_init is None:
        basis_init = mave_ensemble(X, panel, d, cfg).basis
    kernel = get_kernel(cfg.kernel)
    h = bandwidth_initial(n, p, cfg.c0)
    hbar = bandwidth_final(n, d, cfg.hbar0)

    basis = basis_init
    trace: list[float] = []
    bandwidths: list[float] = []
    stage_iters: list[int] = []
    notes: list[str] = []
    total_inner = 0
    converged = False
    n_outer = 0
    for _ in range(cfg.max_outer_iter):
        n_outer += 1
        h = max(cfg.varsigma * h, hbar)
        bandwidths.append(h)
        plan = refined_weights(X, basis, h, kernel, cfg.trim_quantile)
        new_basis, stage_trace, n_inner, _, note = _alternate(
            X, panel, plan, basis, cfg)
        trace.extend(stage_trace)
        stage_iters.append(n_inner)
        total_inner += n_inner
        if note:
            notes.append(f"stage {n_outer}: {note}")
        gap, _ = _proj_change(projection(basis), new_basis)
        basis = new_basis
        if h <= hbar and gap < cfg.tol:
            converged = True
            break
    return EnsembleFit(
        basis=basis, objective_trace=tuple(trace),
        outer_bandwidths=tuple(bandwidths), converged=converged,
        n_outer=n_outer, n_inner=total_inner, method="rmave",
        diagnostics={"stage_inner_iterations": tuple(stage_iters),
                     "notes": tuple(notes)},
    )
