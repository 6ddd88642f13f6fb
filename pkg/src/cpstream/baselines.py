"""Comparison detectors operating on prediction-score streams.

``BocpdDetector`` runs Bayesian online changepoint detection on the
batch-averaged one-step scores: scores are modeled as draws from a Gaussian
with task-specific mean and variance under a conjugate normal-inverse-gamma
prior, and the posterior over the current run length is tracked recursively
with a constant hazard. ``SimpleCdDetector`` compares the per-item score
vectors of consecutive steps with a two-sample Welch t statistic.

Both enforce a minimum distance between consecutive detections; without it
they fire repeatedly around every change.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .core import VAR_FLOOR, ChangepointEvent, StreamError
from .detector import TestDiagnostic

DEFAULT_HAZARD = 1.0 / 500.0
DEFAULT_MIN_DISTANCE = 100

# Run lengths whose cumulative posterior mass is below this are dropped.
PRUNE_MASS = 1e-8


@dataclass(frozen=True)
class NormalInverseGammaPrior:
    mu0: float = 0.0
    kappa0: float = 1.0
    alpha0: float = 0.1
    beta0: float = 1.0


def student_t_logpdf(x: float, df: np.ndarray, loc: np.ndarray, scale: np.ndarray) -> np.ndarray:
    z = (x - loc) / scale
    return (
        gammaln((df + 1.0) / 2.0)
        - gammaln(df / 2.0)
        - 0.5 * np.log(df * np.pi)
        - np.log(scale)
        - (df + 1.0) / 2.0 * np.log1p(z * z / df)
    )


class RunLengthPosterior:
    """Posterior over run lengths with per-run NIG sufficient statistics.

    Between detections the support grows by one run length per observation;
    run lengths carrying a combined mass below PRUNE_MASS are dropped to cap
    memory on long streams.
    """

    def __init__(self, prior: NormalInverseGammaPrior = NormalInverseGammaPrior()):
        self.prior = prior
        self.reset()

    def reset(self) -> None:
        p = self.prior
        self.run_lengths = np.array([0], dtype=np.int64)
        self.weights = np.array([1.0])
        self.mu = np.array([p.mu0])
        self.kappa = np.array([p.kappa0])
        self.alpha = np.array([p.alpha0])
        self.beta = np.array([p.beta0])

    def predictive_logpdf(self, v: float) -> np.ndarray:
        df = 2.0 * self.alpha
        scale = np.sqrt(self.beta * (self.kappa + 1.0) / (self.alpha * self.kappa))
        return student_t_logpdf(v, df, self.mu, scale)

    def prior_predictive_logpdf(self, v: float) -> float:
        p = self.prior
        df = np.array([2.0 * p.alpha0])
        scale = np.sqrt(np.array([p.beta0 * (p.kappa0 + 1.0) / (p.alpha0 * p.kappa0)]))
        return float(student_t_logpdf(v, df, np.array([p.mu0]), scale)[0])

    def advance(self, v: float, hazard: float) -> None:
        """Fold one observation into the run-length recursion.

        A changepoint at the current step means the observation opens a new
        segment, so the changepoint bucket scores it under the prior
        predictive; scoring it under the old runs instead pins the
        changepoint mass at exactly the hazard and no cutoff above it can
        ever fire.
        """
        if not math.isfinite(v):
            raise StreamError("non-finite score")
        logpred = self.predictive_logpdf(v)
        logpred_prior = self.prior_predictive_logpdf(v)
        # Common factor cancels in the renormalization; shift for stability.
        shift = max(logpred.max(), logpred_prior)
        pred = np.exp(logpred - shift)
        grown = self.weights * pred * (1.0 - hazard)
        changed = math.exp(logpred_prior - shift) * hazard

        p = self.prior
        self.run_lengths = np.concatenate(([0], self.run_lengths + 1))
        self.weights = np.concatenate(([changed], grown))
        self.weights /= self.weights.sum()
        # NIG updates for the grown runs; run length 0 restarts from the prior.
        new_mu = (self.kappa * self.mu + v) / (self.kappa + 1.0)
        new_beta = self.beta + self.kappa * (v - self.mu) ** 2 / (2.0 * (self.kappa + 1.0))
        self.mu = np.concatenate(([p.mu0], new_mu))
        self.kappa = np.concatenate(([p.kappa0], self.kappa + 1.0))
        self.alpha = np.concatenate(([p.alpha0], self.alpha + 0.5))
        self.beta = np.concatenate(([p.beta0], new_beta))
        self._prune()

    def _prune(self) -> None:
        if self.weights.size < 8:
            return
        order = np.argsort(self.weights)
        cum = np.cumsum(self.weights[order])
        drop = order[cum < PRUNE_MASS]
        if drop.size == 0:
            return
        keep = np.ones(self.weights.size, dtype=bool)
        keep[drop] = False
        self.run_lengths = self.run_lengths[keep]
        self.weights = self.weights[keep]
        self.weights /= self.weights.sum()
        self.mu = self.mu[keep]
        self.kappa = self.kappa[keep]
        self.alpha = self.alpha[keep]
        self.beta = self.beta[keep]

    @property
    def mass_at_zero(self) -> float:
        at_zero = self.run_lengths == 0
        return float(self.weights[at_zero].sum()) if at_zero.any() else 0.0

    @property
    def map_run_length(self) -> int:
        return int(self.run_lengths[int(np.argmax(self.weights))])


class BocpdDetector:
    """Changepoint events from the run-length posterior of the score stream."""

    def __init__(
        self,
        cutoff: float,
        hazard: float = DEFAULT_HAZARD,
        min_distance: int = DEFAULT_MIN_DISTANCE,
        prior: NormalInverseGammaPrior = NormalInverseGammaPrior(),
    ):
        if not 0.0 < cutoff < 1.0:
            raise StreamError("bocpd cutoff must lie in (0, 1)")
        self.cutoff = cutoff
        self.hazard = hazard
        self.min_distance = min_distance
        self.posterior = RunLengthPosterior(prior)
        self.events: list[ChangepointEvent] = []
        self.diagnostics: list[TestDiagnostic] = []
        self._last_detection: int | None = None
        self._start: int | None = None

    def step(self, v: float, time: int) -> ChangepointEvent | None:
        if self._start is None:
            self._start = time - 1
        self.posterior.advance(v, self.hazard)
        mass = self.posterior.mass_at_zero
        anchor = self._last_detection if self._last_detection is not None else self._start
        fired = mass > self.cutoff and time - anchor >= self.min_distance
        self.diagnostics.append(
            TestDiagnostic(time=time, z=mass, threshold=self.cutoff, delta_i=None, rejected=fired)
        )
        if fired:
            self._last_detection = time
            self.posterior.reset()
            event = ChangepointEvent(
                tau=time,
                z=mass,
                threshold=self.cutoff,
                window_start=time - 1,
                window_end=time,
                test_index=len(self.events),
            )
            self.events.append(event)
            return event
        return None


def welch_t(a, b, var_floor: float = VAR_FLOOR) -> float:
    """Two-sample Welch t statistic with unbiased variances, floored."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.size < 2 or y.size < 2:
        raise StreamError("Welch test needs at least two items per sample")
    vx = max(var_floor, float(x.var(ddof=1)))
    vy = max(var_floor, float(y.var(ddof=1)))
    return float((x.mean() - y.mean()) / math.sqrt(vx / x.size + vy / y.size))


class SimpleCdDetector:
    """Welch t test between the per-item scores of consecutive steps."""

    def __init__(
        self,
        cutoff: float,
        min_distance: int = DEFAULT_MIN_DISTANCE,
        var_floor: float = VAR_FLOOR,
    ):
        if cutoff <= 0.0:
            raise StreamError("critical value must be positive")
        self.cutoff = cutoff
        self.min_distance = min_distance
        self.var_floor = var_floor
        self.events: list[ChangepointEvent] = []
        self.diagnostics: list[TestDiagnostic] = []
        self._prev: np.ndarray | None = None
        self._last_detection: int | None = None
        self._start: int | None = None

    def step(self, scores: np.ndarray, time: int) -> ChangepointEvent | None:
        scores = np.asarray(scores, dtype=np.float64)
        if scores.size < 2:
            raise StreamError("Welch test needs per-item scores")
        if self._start is None:
            self._start = time - 1
        event = None
        if self._prev is not None:
            stat = abs(welch_t(self._prev, scores, self.var_floor))
            anchor = self._last_detection if self._last_detection is not None else self._start
            fired = stat > self.cutoff and time - anchor >= self.min_distance
            self.diagnostics.append(
                TestDiagnostic(
                    time=time, z=stat, threshold=self.cutoff, delta_i=None, rejected=fired
                )
            )
            if fired:
                self._last_detection = time
                event = ChangepointEvent(
                    tau=time,
                    z=stat,
                    threshold=self.cutoff,
                    window_start=time - 1,
                    window_end=time,
                    test_index=len(self.events),
                )
                self.events.append(event)
        self._prev = scores
        return event
