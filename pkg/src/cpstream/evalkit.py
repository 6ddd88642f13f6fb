"""Evaluation metrics and the score-normality diagnostic.

Changepoint lists are compared by one-to-one matching under a time
tolerance. Matching is maximum-cardinality (greedy nearest matching is not
optimal in rare overlapping layouts), with candidate preference nearest
first and earlier detection on ties, so the reported pairs coincide with the
intuitive greedy assignment whenever that one is already optimal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import StreamError


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int], ...]
    tp: int
    jaccard: float
    precision: float
    recall: float

    def record(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "tp": self.tp,
            "jaccard": self.jaccard,
            "precision": self.precision,
            "recall": self.recall,
        }


def _check_sorted(name: str, xs) -> list[int]:
    xs = [int(x) for x in xs]
    if any(xs[i] >= xs[i + 1] for i in range(len(xs) - 1)):
        raise StreamError(f"{name} changepoints must be strictly increasing")
    return xs


def match_changepoints(true_cps, detected, tolerance: int) -> MatchResult:
    """Match true and detected changepoints within ``tolerance`` steps.

    Empty-list conventions: with nothing detected no false claims were made
    (precision 1), with nothing to find nothing was missed (recall 1);
    jaccard is 1 only when both lists are empty.
    """
    if tolerance < 0:
        raise StreamError("tolerance must be >= 0")
    ts = _check_sorted("true", true_cps)
    ds = _check_sorted("detected", detected)

    candidates = [
        sorted(
            (j for j, d in enumerate(ds) if abs(d - t) <= tolerance),
            key=lambda j: (abs(ds[j] - t), ds[j]),
        )
        for t in ts
    ]
    match_of_detected: list[int | None] = [None] * len(ds)

    def augment(i: int, visited: set[int]) -> bool:
        for j in candidates[i]:
            if j in visited:
                continue
            visited.add(j)
            holder = match_of_detected[j]
            if holder is None or augment(holder, visited):
                match_of_detected[j] = i
                return True
        return False

    for i in range(len(ts)):
        augment(i, set())

    pairs = sorted(
        (ts[i], ds[j]) for j, i in enumerate(match_of_detected) if i is not None
    )
    tp = len(pairs)
    n_true, n_det = len(ts), len(ds)
    jaccard = 1.0 if n_true == n_det == 0 else tp / (n_true + n_det - tp)
    precision = 1.0 if n_det == 0 else tp / n_det
    recall = 1.0 if n_true == 0 else tp / n_true
    return MatchResult(
        pairs=tuple(pairs), tp=tp, jaccard=jaccard, precision=precision, recall=recall
    )


def normality_test(samples) -> tuple[float, float]:
    """D'Agostino-Pearson omnibus test: (K2, p) with p from chi-squared(2).

    Requires at least 20 samples; the skewness/kurtosis normal approximations
    are unreliable below that.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size < 20:
        raise StreamError("normality test needs at least 20 samples")
    k2, p = stats.normaltest(arr)
    return float(k2), float(p)
