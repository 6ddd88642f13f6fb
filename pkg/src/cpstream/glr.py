"""Offline GLR changepoint detection inside one score window.

The test compares the single-segment Gaussian hypothesis against a
two-segment split at an unknown location, both with unknown mean and
variance. Plugging in MLE estimates collapses -2 log of the likelihood ratio
at split c to

    T*log S(all) - (c-1)*log S(left) - (T-c+1)*log S(right)

with S the floored MLE variance; the 2*pi and entropy terms cancel because
the segment sizes sum to T.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .calibration import CalibrationTable, threshold_for
from .core import (
    VAR_FLOOR,
    CalibrationMismatch,
    NumericError,
    ScoreWindow,
    StreamError,
    mle_variance,
)


@dataclass(frozen=True)
class OfflineResult:
    """Outcome of one window test.

    ``c_star`` is the 1-based in-window index of the first element of the
    candidate right segment; ``extended_value`` is the statistic at the
    border split c = T-alpha+1, used only as a rejection gate.
    """

    reject: bool
    c_star: int
    z: float
    extended_value: float
    threshold: float


def neg2_log_lambda(window: ScoreWindow, c: int, var_floor: float = VAR_FLOOR) -> float:
    """-2 log likelihood ratio for a split at local index c (left has c-1 points)."""
    v = np.asarray(window.values, dtype=np.float64)
    T = v.shape[0]
    if not 2 <= c <= T:
        raise StreamError("degenerate split")
    return (
        T * math.log(mle_variance(v, var_floor))
        - (c - 1) * math.log(mle_variance(v[: c - 1], var_floor))
        - (T - c + 1) * math.log(mle_variance(v[c - 1 :], var_floor))
    )


def z_statistic(
    window: ScoreWindow, alpha: int, var_floor: float = VAR_FLOOR
) -> tuple[float, int]:
    """Max split statistic over candidates c in [alpha+1, T-alpha].

    Returns ``(z, c_star)``; ties break toward the earlier split. Individual
    split values may be slightly negative in finite samples, so only
    finiteness is enforced here.
    """
    T = window.size
    if T - 2 * alpha < 1 or alpha < 1:
        raise StreamError("empty candidate set")
    z, c_star, _ = _kernels.split_scan(window.values, alpha, var_floor)
    if not math.isfinite(z):
        raise NumericError("non-finite GLR statistic")
    return z, c_star


def offline_detect(
    window: ScoreWindow,
    alpha: int,
    delta: float,
    table: CalibrationTable,
    var_floor: float = VAR_FLOOR,
) -> OfflineResult:
    """Test one full window at error level ``delta``.

    Rejects when z clears both the calibrated threshold and the border-split
    value; the latter defers changepoints sitting in the right border to the
    next window, where they fall inside the candidate set.
    """
    T = window.size
    if table.T != T or table.alpha != alpha:
        raise CalibrationMismatch(
            f"calibration mismatch: table is for (T={table.T}, alpha={table.alpha}), "
            f"got window of {T} with alpha={alpha}"
        )
    z, c_star, ext = _kernels.split_scan(window.values, alpha, var_floor)
    if not (math.isfinite(z) and math.isfinite(ext)):
        raise NumericError("non-finite GLR statistic")
    h = threshold_for(table, delta)
    return OfflineResult(
        reject=bool(z > h and z > ext),
        c_star=int(c_star),
        z=float(z),
        extended_value=float(ext),
        threshold=float(h),
    )
