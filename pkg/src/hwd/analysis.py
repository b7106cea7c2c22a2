"""From accumulated weight sums to a single p-value.

The per-signature averages are normalized to standard normal scores, passed
through the Kronecker transform, and each transformed coordinate except the
first gets a two-sided normal p-value. Coordinates are grouped by the number
of nonzero trits in their index. Within a group the minimum p-value is
corrected for the group size, and the minimum over groups is corrected for
the number of groups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numba
import numpy as np
from scipy import special

from .transform import transform_inplace
from .weightclass import format_signature

PREVIEW_MIN_COUNT = 30


def default_categories(k: int) -> int:
    return k // 2 + 1


def normalize(n: int, S: int, w: int) -> float:
    """Standardized weight sum of ``n`` binomial(w, 1/2) samples; 0 when ``n == 0``."""
    if n == 0:
        return 0.0
    return (S - n * w / 2) / math.sqrt(n * w / 4)


@numba.njit(cache=True)
def _normalize(counts, sums, w, out):
    for s in range(counts.shape[0]):
        n = numba.int64(counts[s])
        if n:
            # (S - n w/2) / sqrt(n w/4) == (2S - n w) / sqrt(n w), numerator exact
            out[s] = (2 * numba.int64(sums[s]) - n * w) / math.sqrt(n * w)
        else:
            out[s] = 0.0
    return out


def normalize_array(counts: np.ndarray, sums: np.ndarray, w: int) -> np.ndarray:
    """Vectorized :func:`normalize`; returns a new float64 array."""
    return _normalize(counts, sums, w, np.empty(counts.shape[0], dtype=np.float64))


def coordinate_pvalue(v):
    """Two-sided standard normal tail ``P(|Z| >= |v|)``.

    Uses ``erfc`` so tiny values keep full relative precision (no
    ``1 - cdf`` cancellation).
    """
    return special.erfc(np.abs(v) / math.sqrt(2.0))


def min_uniform_cdf(p, c):
    """``1 - (1 - p)**c``: CDF of the minimum of ``c`` independent uniforms."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore"):
        out = -np.expm1(c * np.log1p(-p))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CategoryScheme:
    k: int
    C: int

    def __post_init__(self):
        if not 1 <= self.C <= self.k:
            raise ValueError(f"number of categories must be in [1, k={self.k}], got {self.C}")

    @classmethod
    def default(cls, k: int) -> "CategoryScheme":
        return cls(k, default_categories(k))

    @property
    def sizes(self) -> list[int]:
        """Cardinalities of categories 1..C."""
        per_j = [comb(self.k, j) * 2**j for j in range(self.k + 1)]
        return per_j[1:self.C] + [sum(per_j[self.C:])]


def category_of(index: int, k: int, C: int) -> int | None:
    """Category of a transformed coordinate; ``None`` for the discarded index 0."""
    if index == 0:
        return None
    nonzero = 0
    for _ in range(k):
        index, d = divmod(index, 3)
        nonzero += d != 0
    return min(nonzero, C)


@lru_cache(maxsize=4)
def nonzero_trits(k: int) -> np.ndarray:
    """Number of nonzero base-3 digits of every index below ``3**k``."""
    nz = np.zeros(1, dtype=np.uint8)
    for _ in range(k):
        nz = np.concatenate([nz, nz + 1, nz + 1])
    nz.flags.writeable = False
    return nz


@numba.njit(cache=True)
def _category_extremes(v, nz, C):
    best = np.full(C + 1, -1.0)
    where = np.zeros(C + 1, dtype=np.int64)
    for i in range(1, v.shape[0]):
        j = min(numba.int64(nz[i]), C)
        a = abs(v[i])
        if a > best[j]:
            best[j] = a
            where[j] = i
    return best, where


@dataclass
class CombinedResult:
    final_p: float
    category_p: list[float]
    worst_index: int
    worst_category: int
    worst_coordinate_p: float


def combine(transformed: np.ndarray, scheme: CategoryScheme) -> CombinedResult:
    """Combine the coordinate p-values of a transformed vector.

    The minimum p-value of a category is the one of its largest
    ``|coordinate|``, so only ``C`` tail probabilities are evaluated.
    Ties between categories go to the lower category.
    """
    best, where = _category_extremes(transformed, nonzero_trits(scheme.k), scheme.C)
    cat_p = []
    for j, size in enumerate(scheme.sizes, start=1):
        cat_p.append(min_uniform_cdf(coordinate_pvalue(best[j]), size))
    j_min = int(np.argmin(cat_p)) + 1
    final = min_uniform_cdf(cat_p[j_min - 1], scheme.C)
    return CombinedResult(
        final_p=final,
        category_p=cat_p,
        worst_index=int(where[j_min]),
        worst_category=j_min,
        worst_coordinate_p=float(coordinate_pvalue(best[j_min])),
    )


def combine_pvalues(pvalues: np.ndarray, scheme: CategoryScheme) -> tuple[float, int, int]:
    """Combine explicit coordinate p-values (index 0 is ignored).

    Slow reference version of :func:`combine`, working on p-values rather
    than scores. Returns ``(final_p, worst_index, worst_category)``.
    """
    pvalues = np.asarray(pvalues, dtype=np.float64)
    cats = np.minimum(nonzero_trits(scheme.k).astype(np.int64), scheme.C)
    cat_p, arg = [], []
    for j, size in enumerate(scheme.sizes, start=1):
        idx = np.flatnonzero(cats == j)
        idx = idx[idx != 0]
        i = idx[np.argmin(pvalues[idx])]
        arg.append(int(i))
        cat_p.append(min_uniform_cdf(pvalues[i], size))
    j_min = int(np.argmin(cat_p))
    return min_uniform_cdf(cat_p[j_min], scheme.C), arg[j_min], j_min + 1


@dataclass
class TestReport:
    """Outcome of the analysis at one checkpoint."""

    bytes_processed: int
    final_p: float
    worst_signature: str
    worst_category: int
    worst_coordinate_p: float
    preview: bool
    transitional: bool = False
    overflow: bool = False
    verdict: str | None = None

    __test__ = False


def analyze(counts: np.ndarray, sums: np.ndarray, w: int, scheme: CategoryScheme,
            bytes_processed: int, transitional: bool = False) -> TestReport:
    """Run the full analysis on a snapshot of the accumulators.

    ``counts`` and ``sums`` are only read; the normalized vector is a fresh
    array that the transform overwrites.
    """
    v = normalize_array(counts, sums, w)
    transform_inplace(v)
    res = combine(v, scheme)
    preview = bool(counts.min() < PREVIEW_MIN_COUNT)
    return TestReport(
        bytes_processed=bytes_processed,
        final_p=res.final_p,
        worst_signature=format_signature(res.worst_index, scheme.k),
        worst_category=res.worst_category,
        worst_coordinate_p=res.worst_coordinate_p,
        preview=preview,
        transitional=transitional,
    )
