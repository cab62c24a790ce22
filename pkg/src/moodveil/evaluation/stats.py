"""Exact Wilcoxon signed-rank test."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

MAX_EXACT_N = 25
MIN_N = 5


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float   # sum of ranks of positive differences
    pvalue: float
    significant: bool
    n: int             # pairs left after dropping zero differences


def signed_rank_null_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """Number of sign assignments giving each doubled positive-rank sum.

    Ranks are doubled so that average ranks of ties stay integral. Entry k
    counts the assignments whose positive ranks sum to k/2; the counts add up
    to 2**n, matching enumeration of every sign pattern.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled_ranks.astype(int):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(a, b, alpha: float = 0.05) -> WilcoxonResult:
    """Two-sided exact test of zero median difference ``a - b``.

    Zero differences are dropped and tied magnitudes get average ranks. The
    p-value is the probability, under random signs, of a positive-rank sum
    at least as far from its mean as the observed one.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("a and b must be 1-D with equal lengths")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        warnings.warn("all paired differences are zero; returning p = 1")
        return WilcoxonResult(0.0, 1.0, False, 0)
    if n > MAX_EXACT_N:
        raise ValueError(f"exact enumeration supports n <= {MAX_EXACT_N}, got {n}")
    if n < MIN_N:
        warnings.warn(f"only {n} non-zero differences; the test cannot reach small p-values")
    doubled = np.rint(2 * rankdata(np.abs(d))).astype(int)
    w2 = int(doubled[d > 0].sum())
    total = int(doubled.sum())
    counts = signed_rank_null_counts(doubled)
    sums = np.arange(total + 1)
    # Compare |2*W2 - total| (four times the deviation of W from its mean) in integers.
    extreme = np.abs(2 * sums - total) >= abs(2 * w2 - total)
    p = float(sum(counts[extreme]) / 2 ** n)
    p = min(1.0, p)
    return WilcoxonResult(w2 / 2.0, p, p < alpha, n)
