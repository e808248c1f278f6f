"""Paired statistics: Wilcoxon signed-rank test and quantile summaries.

The signed-rank test drops zero differences, ranks |d| with average ranks on
ties, and reports W = min(W+, W-). For n <= 20 the two-sided p-value is exact
(dynamic program over the 2^n sign assignments of the realized ranks); above
that a normal approximation with tie correction is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Array = np.ndarray

EXACT_LIMIT = 20


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float   # W = min of the signed-rank sums
    pvalue: float      # two-sided
    n_used: int        # nonzero differences
    exact: bool


def average_ranks(values: Array) -> Array:
    """Ranks 1..n with ties sharing their average rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _exact_pvalue(ranks: Array, w: float) -> float:
    # DP over doubled ranks so average (half-integer) ranks stay integral.
    r2 = np.rint(2 * ranks).astype(int)
    total = int(r2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in r2:  # r >= 2: doubled ranks start at 2
        counts[r:] += counts[:-r].copy()
    w2 = int(math.floor(2 * w + 1e-9))
    low = counts[:w2 + 1].sum()
    high = counts[total - w2:].sum()
    return min(1.0, float((low + high) / 2.0 ** len(ranks)))


def _normal_pvalue(ranks: Array, w: float, n: int) -> float:
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= (tie_counts.astype(float) ** 3 - tie_counts).sum() / 48.0
    if var <= 0:
        return 1.0
    z = (w - mu) / math.sqrt(var)
    return min(1.0, float(math.erfc(-z / math.sqrt(2.0))))


def wilcoxon_signed_rank(differences) -> WilcoxonResult:
    """Two-sided signed-rank test of paired differences against zero."""
    d = np.asarray(differences, dtype=np.float64)
    d = d[d != 0]
    n = d.size
    if n == 0:
        raise ValueError("all differences are zero; signed-rank test undefined")
    if n < 5:
        raise ValueError(f"need at least 5 nonzero differences, got {n}")
    ranks = average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w = min(w_plus, w_minus)
    if n <= EXACT_LIMIT:
        return WilcoxonResult(w, _exact_pvalue(ranks, w), n, True)
    return WilcoxonResult(w, _normal_pvalue(ranks, w, n), n, False)


# ---------------------------------------------------------------------------
# quantile summaries

QUANTILES = (10, 25, 50, 75, 90)


def _field(record, key):
    if isinstance(record, dict):
        return record[key]
    return getattr(record, key)


def summarize(records, group_keys, value_key: str) -> list[dict]:
    """Per-group 10/25/50/75/90 percentiles of `value_key` (linear
    interpolation between order statistics); groups keep first-seen order."""
    records = list(records)
    if not records:
        raise ValueError("summarize needs at least one record")
    groups: dict[tuple, list[float]] = {}
    for rec in records:
        key = tuple(_field(rec, k) for k in group_keys)
        groups.setdefault(key, []).append(float(_field(rec, value_key)))
    rows = []
    for key, values in groups.items():
        qs = np.percentile(values, QUANTILES)
        row = dict(zip(group_keys, key))
        row["n"] = len(values)
        row.update({f"p{q}": float(v) for q, v in zip(QUANTILES, qs)})
        rows.append(row)
    return rows
