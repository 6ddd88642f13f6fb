"""Hot GLR scan kernels.

Both the per-window candidate scan and the calibration batch scan are
provided in two variants: a numba ``@njit`` loop and a vectorized pure-numpy
fallback. The active variant is chosen at import time; set
``CPSTREAM_NO_NUMBA=1`` to force the numpy path (or drop numba from the
environment). ``benchmarks/bench_kernels.py`` compares the two.

Scan semantics, shared by all variants: for a window ``v`` of length T and a
1-based split index c, the two-segment statistic is

    T*log S(v[1:T]) - (c-1)*log S(v[1:c-1]) - (T-c+1)*log S(v[c:T])

with S the floored MLE variance. Candidate splits are c in [alpha+1, T-alpha];
the border split c = T-alpha+1 is evaluated separately as a rejection gate.
The window is centered on its mean first (the statistic is translation
invariant) so the prefix-sum variances stay well conditioned.
"""
from __future__ import annotations

import os

import numpy as np


def _numba_available() -> bool:
    if os.environ.get("CPSTREAM_NO_NUMBA", ""):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


HAS_NUMBA = _numba_available()


def split_scan_numpy(values: np.ndarray, alpha: int, var_floor: float):
    """Scan all candidate splits of one window.

    Returns ``(z, c_star, ext)``: the max statistic over candidate splits,
    the smallest maximizing 1-based split index, and the statistic at the
    border split c = T-alpha+1.
    """
    v = np.asarray(values, dtype=np.float64)
    T = v.shape[0]
    vc = v - v.mean()
    p1 = np.cumsum(vc)
    p2 = np.cumsum(vc * vc)
    tot1 = p1[-1]
    tot2 = p2[-1]
    s_all = max(var_floor, tot2 / T - (tot1 / T) ** 2)

    n1 = np.arange(alpha, T - alpha + 1)  # left-segment sizes, c = n1 + 1
    n2 = T - n1
    l1 = p1[n1 - 1]
    l2 = p2[n1 - 1]
    s_left = np.maximum(var_floor, l2 / n1 - (l1 / n1) ** 2)
    s_right = np.maximum(var_floor, (tot2 - l2) / n2 - ((tot1 - l1) / n2) ** 2)
    vals = T * np.log(s_all) - n1 * np.log(s_left) - n2 * np.log(s_right)

    ext = float(vals[-1])
    cand = vals[:-1]
    k = int(np.argmax(cand))  # first occurrence: ties break toward earlier time
    return float(cand[k]), alpha + 1 + k, ext


def batch_extended_max_numpy(windows: np.ndarray, alpha: int, var_floor: float) -> np.ndarray:
    """Null-calibration statistic for each row of ``windows`` (n x T).

    The max runs over the extended split set [alpha+1, T-alpha+1], which is
    the convention behind the published threshold tables; it upper-bounds the
    detection statistic, so thresholds from it keep the error budget valid.
    """
    V = np.asarray(windows, dtype=np.float64)
    n, T = V.shape
    Vc = V - V.mean(axis=1, keepdims=True)
    p1 = np.cumsum(Vc, axis=1)
    p2 = np.cumsum(Vc * Vc, axis=1)
    tot1 = p1[:, -1:]
    tot2 = p2[:, -1:]
    s_all = np.maximum(var_floor, tot2[:, 0] / T - (tot1[:, 0] / T) ** 2)

    n1 = np.arange(alpha, T - alpha + 1)
    n2 = T - n1
    l1 = p1[:, n1 - 1]
    l2 = p2[:, n1 - 1]
    s_left = np.maximum(var_floor, l2 / n1 - (l1 / n1) ** 2)
    s_right = np.maximum(var_floor, (tot2 - l2) / n2 - ((tot1 - l1) / n2) ** 2)
    vals = T * np.log(s_all)[:, None] - n1 * np.log(s_left) - n2 * np.log(s_right)
    return vals.max(axis=1)


if HAS_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _scan_jit(v, alpha, var_floor):  # pragma: no cover - exercised via wrappers
        T = v.shape[0]
        mean = 0.0
        for i in range(T):
            mean += v[i]
        mean /= T
        p1 = np.empty(T)
        p2 = np.empty(T)
        a1 = 0.0
        a2 = 0.0
        for i in range(T):
            x = v[i] - mean
            a1 += x
            a2 += x * x
            p1[i] = a1
            p2[i] = a2
        tot1 = p1[T - 1]
        tot2 = p2[T - 1]
        s_all = tot2 / T - (tot1 / T) ** 2
        if s_all < var_floor:
            s_all = var_floor
        base = T * np.log(s_all)

        best = -np.inf
        best_c = -1
        ext = np.nan
        for c in range(alpha + 1, T - alpha + 2):
            n1 = c - 1
            n2 = T - n1
            l1 = p1[n1 - 1]
            l2 = p2[n1 - 1]
            s_left = l2 / n1 - (l1 / n1) ** 2
            if s_left < var_floor:
                s_left = var_floor
            s_right = (tot2 - l2) / n2 - ((tot1 - l1) / n2) ** 2
            if s_right < var_floor:
                s_right = var_floor
            val = base - n1 * np.log(s_left) - n2 * np.log(s_right)
            if c <= T - alpha:
                if val > best:
                    best = val
                    best_c = c
            else:
                ext = val
        return best, best_c, ext

    @njit(cache=True)
    def _batch_jit(V, alpha, var_floor):  # pragma: no cover - exercised via wrappers
        n, T = V.shape
        out = np.empty(n)
        for r in range(n):
            z, c, ext = _scan_jit(V[r], alpha, var_floor)
            if ext > z:
                z = ext
            out[r] = z
        return out

    def split_scan_numba(values, alpha, var_floor):
        z, c, ext = _scan_jit(np.ascontiguousarray(values, dtype=np.float64), alpha, var_floor)
        return float(z), int(c), float(ext)

    def batch_extended_max_numba(windows, alpha, var_floor):
        return _batch_jit(np.ascontiguousarray(windows, dtype=np.float64), alpha, var_floor)

    split_scan = split_scan_numba
    batch_extended_max = batch_extended_max_numba
else:
    split_scan_numba = None
    batch_extended_max_numba = None
    split_scan = split_scan_numpy
    batch_extended_max = batch_extended_max_numpy
