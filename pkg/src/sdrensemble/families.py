"""Characterizing families of response transformations and their evaluation.

A family is a finite set of scalar-valued functions of the response. The
estimators never see Y directly; they see the evaluated panel, an n x q
real matrix whose columns are the member functions applied to each
observation (complex-valued members contribute a real and an imaginary
column each).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .core import readonly

__all__ = [
    "FunctionFamily",
    "ResponsePanel",
    "sample_cf_family",
    "boxcox_family",
    "haar_family",
    "slice_family",
    "poly_family",
    "kde_family",
    "identity_family",
    "shift_nonneg",
    "default_slice_thresholds",
    "evaluate",
    "DEFAULT_BOXCOX_GRID",
]

DEFAULT_BOXCOX_GRID = (-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0)

REAL_KINDS = ("boxcox", "haar", "slice", "polynomial", "kerneldensity")


@dataclass(frozen=True)
class FunctionFamily:
    """A finite characterizing family; exactly one parameter block is set.

    kind: one of characteristic, boxcox, haar, slice, polynomial,
        kerneldensity.
    params: kind-specific parameters. For "characteristic" an (m, s) array
        of frequency vectors; for "haar" a tuple of (level, shift) pairs
        with an implicit leading constant member; arrays otherwise.
    complex_valued: True only for the characteristic family.
    standardize_response: characteristic only; center/scale Y per
        coordinate before evaluating, so unit-scale frequencies probe the
        data at its natural scale. Off by default (raw response).
    """

    kind: str
    params: tuple
    complex_valued: bool = False
    standardize_response: bool = False

    @property
    def m(self) -> int:
        if self.kind == "characteristic":
            return self.params[0].shape[0]
        if self.kind == "haar":
            return 1 + len(self.params[0])
        return len(self.params[0])

    @property
    def panel_width(self) -> int:
        return 2 * self.m if self.complex_valued else self.m

    @property
    def response_dim(self) -> int:
        return self.params[0].shape[1] if self.kind == "characteristic" else 1


@dataclass(frozen=True)
class ResponsePanel:
    """Evaluated family: G is n x q with column metadata (k, l).

    For complex families columns are interleaved per member k: (k, 1) holds
    the real part and (k, 2) the imaginary part. Real families have a
    single l = 1 column per member.
    """

    G: np.ndarray
    cols: tuple
    complex_valued: bool

    def __post_init__(self) -> None:
        G = np.asarray(self.G, dtype=float)
        if not np.isfinite(G).all():
            raise ValueError("panel contains non-finite entries")
        if G.shape[1] != len(self.cols):
            raise ValueError("column metadata does not match panel width")
        object.__setattr__(self, "G", readonly(G))
        object.__setattr__(self, "cols", tuple(self.cols))

    @property
    def n(self) -> int:
        return self.G.shape[0]

    @property
    def q(self) -> int:
        return self.G.shape[1]


def sample_cf_family(s: int, m: int, rng: np.random.Generator,
                     standardize_response: bool = False) -> FunctionFamily:
    """Sample m frequency vectors i.i.d. from N(0, I_s).

    Each member function is y -> exp(i t'y) for one sampled frequency t.
    Frequencies are drawn from per-member sub-streams, so the first m0
    members of a size-m family coincide with a size-m0 family drawn from
    the same generator state.
    """
    if m < 1:
        raise ValueError("ensemble size must be >= 1")
    freqs = np.empty((m, s))
    for k, child in enumerate(rng.spawn(m)):
        freqs[k] = child.standard_normal(s)
    return FunctionFamily(kind="characteristic", params=(readonly(freqs),),
                          complex_valued=True,
                          standardize_response=standardize_response)


def boxcox_family(grid=DEFAULT_BOXCOX_GRID) -> FunctionFamily:
    """Power-transformation family over a fixed exponent grid.

    Member t maps y to (y^t - 1) / t, with the t = 0 member being log y.
    Requires strictly positive responses; see shift_nonneg.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("exponent grid must be nonempty")
    return FunctionFamily(kind="boxcox", params=(readonly(grid),))


def haar_family(max_level: int) -> FunctionFamily:
    """Haar wavelet family on [0, 1): the constant plus psi(2^n y - k).

    Levels n = 1..max_level with shifts k = 0..2^n - 1, giving
    1 + sum 2^n members. Responses are rank-transformed to [0, 1) at
    evaluation time.
    """
    if max_level < 1:
        raise ValueError("max_level must be >= 1")
    indices = tuple((lv, k) for lv in range(1, max_level + 1)
                    for k in range(2 ** lv))
    return FunctionFamily(kind="haar", params=(indices,))


def slice_family(thresholds) -> FunctionFamily:
    """Indicator family y -> 1(y < t) for each threshold t."""
    t = np.asarray(thresholds, dtype=float)
    if t.size == 0:
        raise ValueError("threshold list must be nonempty")
    return FunctionFamily(kind="slice", params=(readonly(t),))


def poly_family(degrees) -> FunctionFamily:
    """Monomial family y -> y^t for positive integer degrees t."""
    deg = np.asarray(degrees, dtype=int)
    if deg.size == 0 or (deg < 1).any():
        raise ValueError("degrees must be a nonempty list of integers >= 1")
    return FunctionFamily(kind="polynomial", params=(readonly(deg),))


def identity_family() -> FunctionFamily:
    """Single-member family {y}; reduces the ensemble to a plain fit on Y."""
    return poly_family([1])


def kde_family(centers, widths) -> FunctionFamily:
    """Gaussian bump family y -> phi((y - a) / b) / b over (center, width) pairs."""
    a = np.asarray(centers, dtype=float)
    b = np.asarray(widths, dtype=float)
    if a.size == 0 or a.shape != b.shape:
        raise ValueError("centers and widths must be nonempty and congruent")
    if (b <= 0).any():
        raise ValueError("kernel-density widths must be positive")
    return FunctionFamily(kind="kerneldensity", params=(readonly(a), readonly(b)))


def default_slice_thresholds(y: np.ndarray, m: int) -> np.ndarray:
    """Empirical quantiles at levels k/(m+1), k = 1..m; spreads slices evenly."""
    levels = np.arange(1, m + 1) / (m + 1)
    return np.quantile(np.asarray(y, dtype=float).ravel(), levels)


def shift_nonneg(Y: np.ndarray) -> np.ndarray:
    """Shift each response column so its minimum is exactly 0.5."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        return Y - Y.min() + 0.5
    return Y - Y.min(axis=0) + 0.5


def _boxcox_columns(y: np.ndarray, grid: np.ndarray) -> np.ndarray:
    if (y <= 0).any():
        raise ValueError(
            "Box-Cox family needs strictly positive responses; apply shift_nonneg first"
        )
    ly = np.log(y)
    out = np.empty((y.size, grid.size))
    for j, t in enumerate(grid):
        # expm1(t log y)/t evaluates (y^t - 1)/t without cancellation near t = 0
        out[:, j] = ly if t == 0.0 else np.expm1(t * ly) / t
    return out


def _haar_mother(t: np.ndarray) -> np.ndarray:
    return np.where((t >= 0.0) & (t < 0.5), 1.0,
                    np.where((t >= 0.5) & (t < 1.0), -1.0, 0.0))


def evaluate(fam: FunctionFamily, Y: np.ndarray) -> ResponsePanel:
    """Evaluate every member function on every response row.

    Returns the n x q panel; q = 2m for the characteristic family (cos and
    sin columns per member), q = m otherwise. Real families require a
    scalar response.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, s = Y.shape
    if fam.kind == "characteristic":
        freqs = fam.params[0]
        if s != freqs.shape[1]:
            raise ValueError(
                f"family expects {freqs.shape[1]}-dimensional responses, got {s}"
            )
        Yw = Y
        if fam.standardize_response:
            sd = Y.std(axis=0, ddof=1)
            if not (sd > 0).all():
                raise ValueError("cannot standardize a constant response column")
            Yw = (Y - Y.mean(axis=0)) / sd
        U = Yw @ freqs.T
        G = np.empty((n, 2 * fam.m))
        G[:, 0::2] = np.cos(U)
        G[:, 1::2] = np.sin(U)
        cols = tuple((k, l) for k in range(fam.m) for l in (1, 2))
        return ResponsePanel(G=G, cols=cols, complex_valued=True)

    if s != 1:
        raise ValueError(f"{fam.kind} family requires a scalar response, got s={s}")
    y = Y[:, 0]
    if fam.kind == "boxcox":
        G = _boxcox_columns(y, fam.params[0])
    elif fam.kind == "haar":
        u = (rankdata(y, method="average") - 0.5) / n
        indices = fam.params[0]
        G = np.empty((n, 1 + len(indices)))
        G[:, 0] = 1.0
        for j, (lv, k) in enumerate(indices, start=1):
            G[:, j] = _haar_mother((2.0 ** lv) * u - k)
    elif fam.kind == "slice":
        G = (y[:, None] < fam.params[0][None, :]).astype(float)
    elif fam.kind == "polynomial":
        G = y[:, None] ** fam.params[0][None, :]
    elif fam.kind == "kerneldensity":
        a, b = fam.params
        z = (y[:, None] - a[None, :]) / b[None, :]
        G = np.exp(-0.5 * z * z) / (b[None, :] * np.sqrt(2.0 * np.pi))
    else:
        raise ValueError(f"unknown family kind {fam.kind!r}")
    cols = tuple((k, 1) for k in range(G.shape[1]))
    return ResponsePanel(G=G, cols=cols, complex_valued=False)
