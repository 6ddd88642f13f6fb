"""Monte Carlo calibration of the null distribution of the window statistic.

Thresholds h(delta) are (1-delta) quantiles of the statistic computed on
windows of i.i.d. standard normal scores; location-scale invariance makes
standard normal draws fully general. A line h ~ intercept + slope*log10(1/delta)
is fitted over the tabulated quantiles and serves as the lookup for error
levels between and beyond the table entries.

Simulation is chunked: chunk j draws from a generator seeded with
SeedSequence([seed, j]) at a fixed chunk size, so a sharded run concatenating
chunk results reproduces the single-worker sequence exactly.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import VAR_FLOOR, StreamError

# Windows per RNG chunk. Fixed so that sharding across workers cannot change
# the sample sequence.
CHUNK_SIZE = 8192

RNG_NAME = f"pcg64-seedseq-chunk{CHUNK_SIZE}"

DEFAULT_DELTAS = (0.1, 0.05, 0.01, 0.001, 1e-4, 1e-5, 1e-6)


@dataclass(frozen=True)
class CalibrationTable:
    """Simulated (1-delta) quantiles of the null statistic for one (T, alpha).

    ``entries`` is sorted by descending delta; ``fit`` is the least-squares
    line of h against log10(1/delta).
    """

    T: int
    alpha: int
    entries: tuple[tuple[float, float], ...]
    fit: tuple[float, float]  # (slope, intercept)
    n_sims: int
    seed: int
    rng_name: str = RNG_NAME

    def __post_init__(self) -> None:
        deltas = [d for d, _ in self.entries]
        hs = [h for _, h in self.entries]
        if any(not 0.0 < d < 1.0 for d in deltas):
            raise StreamError("table deltas must lie in (0, 1)")
        if any(deltas[i] <= deltas[i + 1] for i in range(len(deltas) - 1)):
            raise StreamError("table entries must be sorted by descending delta")
        if any(hs[i] >= hs[i + 1] for i in range(len(hs) - 1)):
            raise StreamError("thresholds must increase strictly as delta decreases")


def _validate_window(T: int, alpha: int) -> None:
    if alpha < 1 or T - 2 * alpha < 1:
        raise StreamError("need 0 < alpha < T/2")


def simulate_null_z(T: int, alpha: int, n_sims: int, seed: int) -> np.ndarray:
    """Draw ``n_sims`` samples of the null window statistic, unsorted.

    Deterministic given ``seed`` and independent of how chunks are scheduled.
    """
    _validate_window(T, alpha)
    if n_sims < 1:
        raise StreamError("n_sims must be >= 1")
    out = np.empty(n_sims)
    done = 0
    chunk = 0
    while done < n_sims:
        take = min(CHUNK_SIZE, n_sims - done)
        rng = np.random.default_rng(np.random.SeedSequence([seed, chunk]))
        windows = rng.standard_normal((CHUNK_SIZE, T))[:take]
        out[done : done + take] = _kernels.batch_extended_max(windows, alpha, VAR_FLOOR)
        done += take
        chunk += 1
    return out


def quantile_table(samples, deltas) -> list[tuple[float, float]]:
    """Nearest-rank (1-delta) quantiles, one entry per delta, sorted by
    descending delta. Requires at least 1/delta samples per entry."""
    arr = np.sort(np.asarray(samples, dtype=np.float64))
    n = arr.size
    if n == 0:
        raise StreamError("empty sample set")
    entries = []
    for delta in sorted(set(float(d) for d in deltas), reverse=True):
        if not 0.0 < delta < 1.0:
            raise StreamError("delta must lie in (0, 1)")
        rank = math.ceil(n * (1.0 - delta))
        if rank > n or n * delta < 1.0:
            raise StreamError(f"insufficient simulations for delta={delta:g}")
        entries.append((delta, float(arr[rank - 1])))
    return entries


def fit_threshold(entries) -> tuple[float, float]:
    """Ordinary least squares of h against log10(1/delta). Returns (slope, intercept)."""
    if len(entries) < 2:
        raise StreamError("need at least two entries to fit the threshold line")
    x = np.log10(1.0 / np.array([d for d, _ in entries], dtype=np.float64))
    y = np.array([h for _, h in entries], dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def threshold_for(table: CalibrationTable, delta: float) -> float:
    """Threshold at ``delta``: the exact table entry when delta matches one,
    otherwise the fitted-line value (monotone extrapolation outside the
    table's range). Never negative."""
    if not 0.0 < delta < 1.0:
        raise StreamError("delta must lie in (0, 1)")
    for d, h in table.entries:
        if math.isclose(d, delta, rel_tol=1e-12):
            return h
    slope, intercept = table.fit
    return max(0.0, intercept + slope * math.log10(1.0 / delta))


def build_table(
    T: int,
    alpha: int,
    n_sims: int,
    seed: int,
    deltas=DEFAULT_DELTAS,
) -> CalibrationTable:
    """Simulate, tabulate and fit in one go."""
    samples = simulate_null_z(T, alpha, n_sims, seed)
    entries = quantile_table(samples, deltas)
    fit = fit_threshold(entries)
    return CalibrationTable(
        T=T,
        alpha=alpha,
        entries=tuple(entries),
        fit=fit,
        n_sims=n_sims,
        seed=seed,
    )


def table_document(table: CalibrationTable) -> dict:
    return {
        "T": table.T,
        "alpha": table.alpha,
        "n_sims": table.n_sims,
        "seed": table.seed,
        "rng_name": table.rng_name,
        "entries": [{"delta": d, "h": h} for d, h in table.entries],
        "fit": {"slope": table.fit[0], "intercept": table.fit[1]},
    }


def table_from_document(doc: dict) -> CalibrationTable:
    try:
        return CalibrationTable(
            T=int(doc["T"]),
            alpha=int(doc["alpha"]),
            entries=tuple((float(e["delta"]), float(e["h"])) for e in doc["entries"]),
            fit=(float(doc["fit"]["slope"]), float(doc["fit"]["intercept"])),
            n_sims=int(doc["n_sims"]),
            seed=int(doc["seed"]),
            rng_name=str(doc.get("rng_name", RNG_NAME)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise StreamError(f"malformed calibration table: {exc}") from exc


def save_table(table: CalibrationTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table_document(table), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_table(path) -> CalibrationTable:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise StreamError(f"malformed calibration table {path}: {exc}") from exc
    return table_from_document(doc)
