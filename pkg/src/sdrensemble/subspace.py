"""Semiorthogonal bases, projections, and subspace distances.

A subspace of R^p is represented by a p x d matrix B with B'B = I. To make
outputs reproducible across runs and platforms every basis carries a sign
convention: the largest-magnitude entry of each column is positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import readonly

__all__ = [
    "Basis",
    "orthonormalize",
    "projection",
    "distance",
    "principal_angles",
]

ORTHO_TOL = 1e-10


def _fix_signs(B: np.ndarray) -> np.ndarray:
    B = np.array(B, dtype=float)
    for c in range(B.shape[1]):
        lead = np.argmax(np.abs(B[:, c]))
        if B[lead, c] < 0:
            B[:, c] = -B[:, c]
    return B


@dataclass(frozen=True)
class Basis:
    """Semiorthogonal p x d matrix; the sign convention is applied on construction."""

    B: np.ndarray

    def __post_init__(self) -> None:
        B = np.asarray(self.B, dtype=float)
        if B.ndim != 2:
            raise ValueError("basis must be a 2-d array")
        p, d = B.shape
        if not 1 <= d <= p:
            raise ValueError(f"need 1 <= d <= p, got shape {B.shape}")
        if not np.isfinite(B).all():
            raise ValueError("basis contains non-finite entries")
        gram_err = np.abs(B.T @ B - np.eye(d)).max()
        if gram_err > ORTHO_TOL:
            raise ValueError(
                f"basis is not semiorthogonal: max |B'B - I| = {gram_err:.3e}"
            )
        object.__setattr__(self, "B", readonly(_fix_signs(B)))

    @property
    def p(self) -> int:
        return self.B.shape[0]

    @property
    def d(self) -> int:
        return self.B.shape[1]


def orthonormalize(M: np.ndarray) -> Basis:
    """Project a full-column-rank p x d matrix onto the semiorthogonal set.

    Uses the symmetric map M (M'M)^{-1/2}, which preserves span(M). When M
    is already semiorthogonal to within 1e-12 the rescaling is skipped, so
    the operation is idempotent bit-for-bit.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2 or not np.isfinite(M).all():
        raise ValueError("candidate basis must be a finite 2-d array")
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0 or sv[-1] <= 1e-10 * sv[0]:
        raise ValueError("rank-deficient basis candidate")
    G = M.T @ M
    if np.abs(G - np.eye(M.shape[1])).max() <= 1e-12:
        return Basis(M)
    evals, evecs = np.linalg.eigh(G)
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    return Basis(M @ inv_sqrt)


def projection(basis: Basis) -> np.ndarray:
    """Orthogonal projection matrix onto span(basis)."""
    B = basis.B
    return B @ B.T


def _as_projection(b) -> np.ndarray:
    if isinstance(b, Basis):
        return projection(b)
    B = np.asarray(b, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    return projection(orthonormalize(B))


def distance(b1, b2, norm: str = "operator") -> float:
    """Distance between two subspaces as a norm of the projection difference.

    Accepts Basis objects or raw basis matrices (orthonormalized first).
    ``norm`` is "operator" (largest singular value) or "frobenius".
    """
    P1 = _as_projection(b1)
    P2 = _as_projection(b2)
    if P1.shape != P2.shape:
        raise ValueError(f"bases live in different spaces: {P1.shape[0]} vs {P2.shape[0]} rows")
    D = P1 - P2
    if norm == "operator":
        return float(np.abs(np.linalg.eigvalsh(D)).max())
    if norm == "frobenius":
        return float(np.linalg.norm(D, "fro"))
    raise ValueError(f"unknown norm {norm!r}")


def principal_angles(b1, b2) -> np.ndarray:
    """Principal angles between two subspaces, in [0, pi/2], sorted ascending."""
    B1 = b1.B if isinstance(b1, Basis) else orthonormalize(np.asarray(b1)).B
    B2 = b2.B if isinstance(b2, Basis) else orthonormalize(np.asarray(b2)).B
    if B1.shape[0] != B2.shape[0]:
        raise ValueError("bases live in different spaces")
    s = np.linalg.svd(B1.T @ B2, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))
