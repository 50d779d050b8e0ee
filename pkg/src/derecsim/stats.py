"""Two-sample Kolmogorov-Smirnov test and 1-D Wasserstein distance on discrete supports."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from derecsim.errors import EmptySample

# Exact p-values are computed when m * n is at most this many lattice cells;
# larger samples use the asymptotic Kolmogorov distribution.
EXACT_MAX_CELLS = 100_000
SERIES_TOL = 1e-12


class KSResult(NamedTuple):
    statistic: float
    pvalue: float


def _as_sorted(x: Sequence[float] | np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size == 0:
        raise EmptySample(f"sample {name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"sample {name} contains non-finite values")
    return np.sort(arr, kind="mergesort")


def kolmogorov_sf(lam: float) -> float:
    """P(K > lam) for the limiting Kolmogorov distribution.

    Uses the alternating series for lam >= 1 and the Jacobi-theta form below,
    where the alternating series converges slowly; both are truncated once a
    term drops under 1e-12.
    """
    if lam <= 0:
        return 1.0
    if lam >= 1.0:
        total, k = 0.0, 1
        while True:
            term = math.exp(-2.0 * k * k * lam * lam)
            total += term if k % 2 else -term
            if term < SERIES_TOL:
                break
            k += 1
        return min(1.0, max(0.0, 2.0 * total))
    # cdf = sqrt(2 pi)/lam * sum_k exp(-(2k-1)^2 pi^2 / (8 lam^2))
    c = math.pi * math.pi / (8.0 * lam * lam)
    total, k = 0.0, 1
    while True:
        term = math.exp(-((2 * k - 1) ** 2) * c)
        total += term
        if term < SERIES_TOL:
            break
        k += 1
    cdf = math.sqrt(2.0 * math.pi) / lam * total
    return min(1.0, max(0.0, 1.0 - cdf))


def _exact_pvalue(z: np.ndarray, m: int, n: int, dnum: int) -> float:
    """P(D >= observed) under random assignment of the pooled sample ``z``.

    Counts monotone lattice paths from (0, 0) to (m, n) whose scaled ECDF gap
    |i*n - j*m| stays below ``dnum`` at every tie-block boundary of the sorted
    pooled sample. Path counts are kept normalised by C(i+j, i) so they stay
    in [0, 1]. Ties are honoured: inside a block of equal values the gap is
    not observable, so it is not constrained.
    """
    total = m + n
    boundary = np.ones(total + 1, dtype=bool)
    boundary[1:total] = z[1:] != z[:-1]
    i = np.arange(m + 1)
    f = np.zeros(m + 1)
    f[0] = 1.0
    for k in range(1, total + 1):
        g = ((k - i) / k) * f
        g[1:] += (i[1:] / k) * f[:-1]
        g[(i < k - n) | (i > k)] = 0.0
        if boundary[k]:
            g[np.abs(i * n - (k - i) * m) >= dnum] = 0.0
        f = g
    return float(min(1.0, max(0.0, 1.0 - f[m])))


def ks_two_sample(x: Sequence[float], y: Sequence[float]) -> KSResult:
    """Two-sided two-sample KS test.

    ``D = sup |F_x - F_y|``. The p-value is the exact permutation probability
    of a gap at least that large (tie-aware) when ``len(x) * len(y)`` is at
    most :data:`EXACT_MAX_CELLS`, otherwise the asymptotic Kolmogorov tail at
    ``sqrt(mn / (m + n)) * D``. ``D == 0`` gives ``p == 1`` exactly.
    """
    xs, ys = _as_sorted(x, "x"), _as_sorted(y, "y")
    if xs.size > ys.size:
        xs, ys = ys, xs
    m, n = int(xs.size), int(ys.size)
    z = np.sort(np.concatenate([xs, ys]), kind="mergesort")
    cx = np.searchsorted(xs, z, side="right").astype(np.int64)
    cy = np.searchsorted(ys, z, side="right").astype(np.int64)
    dnum = int(np.max(np.abs(cx * n - cy * m)))
    if dnum == 0:
        return KSResult(0.0, 1.0)
    d = dnum / (m * n)
    if m * n <= EXACT_MAX_CELLS:
        return KSResult(d, _exact_pvalue(z, m, n, dnum))
    return KSResult(d, kolmogorov_sf(math.sqrt(m * n / (m + n)) * d))


@dataclass(frozen=True)
class EmpiricalDist:
    """Discrete distribution on a strictly increasing support."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        s = np.asarray(self.support, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if s.ndim != 1 or s.shape != w.shape or s.size == 0:
            raise ValueError("support and weights must be equal-length non-empty vectors")
        if np.any(np.diff(s) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        s.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_samples(cls, values: Sequence[float] | np.ndarray) -> EmpiricalDist:
        arr = np.asarray(values, dtype=float).ravel()
        if arr.size == 0:
            raise EmptySample("cannot build a distribution from no samples")
        support, counts = np.unique(arr, return_counts=True)
        return cls(support, counts / arr.size)

    @classmethod
    def from_weights(cls, support: Sequence[float], weights: Sequence[float]) -> EmpiricalDist:
        """Sort, merge duplicate support points and normalise."""
        s = np.asarray(support, dtype=float)
        w = np.asarray(weights, dtype=float)
        uniq, inv = np.unique(s, return_inverse=True)
        merged = np.bincount(inv, weights=w, minlength=uniq.size)
        return cls(uniq, merged / merged.sum())

    def cdf(self, at: np.ndarray) -> np.ndarray:
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        return cum[np.searchsorted(self.support, at, side="right")]


def wasserstein_1d(p: EmpiricalDist, q: EmpiricalDist) -> float:
    """W1 = integral of |CDF_p - CDF_q| over the merged support (exact for discrete laws)."""
    grid = np.union1d(p.support, q.support)
    if grid.size < 2:
        return 0.0
    gap = np.abs(p.cdf(grid[:-1]) - q.cdf(grid[:-1]))
    return float(np.sum(gap * np.diff(grid)))
