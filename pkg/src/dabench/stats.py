"""Significance testing and aggregation: Wilcoxon signed-rank, Pearson, average ranks."""

from __future__ import annotations

import numpy as np
from scipy.stats import norm

from . import errors

#: Exact null enumeration is used up to this many nonzero pairs.
EXACT_LIMIT = 20


def _signed_ranks(diff):
    """Average ranks of |diff| (zeros already dropped)."""
    order = np.argsort(np.abs(diff), kind="stable")
    ranks = np.empty(diff.shape[0])
    sorted_abs = np.abs(diff)[order]
    i = 0
    while i < diff.shape[0]:
        j = i
        while j + 1 < diff.shape[0] and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_two_sided_p(ranks, w_plus):
    """Two-sided p under the exact sign-flip null.

    Works on doubled ranks so that midranks from ties stay integral; the
    distribution of W+ is built by convolution, which enumerates all 2^n
    sign patterns implicitly.
    """
    scaled = np.round(2.0 * ranks).astype(np.int64)
    total = int(scaled.sum())
    pmf = np.zeros(total + 1)
    pmf[0] = 1.0
    for r in scaled:
        shifted = np.zeros_like(pmf)
        shifted[r:] = pmf[: total + 1 - r]
        pmf = 0.5 * (pmf + shifted)
    w2 = int(round(2.0 * w_plus))
    p_low = float(pmf[: w2 + 1].sum())
    p_high = float(pmf[w2:].sum())
    return min(1.0, 2.0 * min(p_low, p_high))


def wilcoxon_signed_rank(x, y, level=0.05):
    """Paired two-sided Wilcoxon signed-rank test.

    Zero differences are dropped (Wilcoxon convention) and ties receive
    average ranks.  The null distribution is exact (full sign-pattern
    enumeration) for up to 20 nonzero pairs, and a normal approximation
    with tie correction and continuity correction beyond that.

    Returns
    -------
    (p_value, significant, direction)
        ``direction`` is ``"gain"`` when x tends to exceed y, ``"drop"``
        for the reverse, and ``"none"`` for a tie or a degenerate sample.
        Fewer than 5 nonzero pairs yield ``(1.0, False, "none")``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise errors.LengthMismatch("paired samples must be equal-length vectors")
    diff = x - y
    diff = diff[diff != 0.0]
    n = diff.shape[0]
    if n < 5:
        return 1.0, False, "none"
    ranks = _signed_ranks(diff)
    w_plus = float(ranks[diff > 0].sum())
    w_minus = float(ranks[diff < 0].sum())
    if n <= EXACT_LIMIT:
        p = _exact_two_sided_p(ranks, w_plus)
    else:
        mu = n * (n + 1) / 4.0
        _, counts = np.unique(ranks, return_counts=True)
        tie_term = float(np.sum(counts.astype(float) ** 3 - counts)) / 48.0
        sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
        delta = w_plus - mu
        z = (delta - 0.5 * np.sign(delta)) / np.sqrt(sigma2)
        p = float(min(1.0, 2.0 * norm.sf(abs(z))))
    if w_plus > w_minus:
        direction = "gain"
    elif w_plus < w_minus:
        direction = "drop"
    else:
        direction = "none"
    return p, bool(p < level), direction


def pearson_r(x, y) -> float:
    """Product-moment correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.shape[0] < 2:
        raise errors.LengthMismatch("need two equal-length vectors with n >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt(np.sum(xc ** 2) * np.sum(yc ** 2))
    if denom == 0.0:
        raise errors.ZeroVariance("pearson_r needs nonzero variance in both inputs")
    return float(np.clip(np.sum(xc * yc) / denom, -1.0, 1.0))


def average_rank(scores):
    """Mean rank of each method across scenarios.

    Parameters
    ----------
    scores : ndarray of shape (n_methods, n_scenarios)
        Higher is better; NaN marks a method unavailable on a scenario and
        receives the worst possible rank there.

    Returns
    -------
    ndarray of shape (n_methods,)
    """
    S = np.asarray(scores, dtype=np.float64)
    if S.ndim != 2 or S.size == 0:
        raise errors.EmptyTable("need a nonempty methods x scenarios matrix")
    n_methods = S.shape[0]
    ranks = np.empty_like(S)
    for j in range(S.shape[1]):
        col = S[:, j]
        ok = ~np.isnan(col)
        vals = -col[ok]
        order = np.argsort(vals, kind="stable")
        r = np.empty(order.shape[0])
        i = 0
        while i < order.shape[0]:
            k = i
            while k + 1 < order.shape[0] and vals[order[k + 1]] == vals[order[i]]:
                k += 1
            r[order[i : k + 1]] = 0.5 * (i + k) + 1.0
            i = k + 1
        ranks[ok, j] = r
        ranks[~ok, j] = n_methods
    return ranks.mean(axis=1)
