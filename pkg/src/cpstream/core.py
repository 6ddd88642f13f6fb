"""Shared domain types and scalar score statistics.

Everything downstream (GLR tests, calibration, detectors) consumes the types
and the three score primitives defined here. Functions are pure and safe to
call concurrently; the dataclasses are plain immutable values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Variance floor: keeps log-variances finite on constant segments. Applied
# inside mle_variance so every consumer inherits the same convention.
VAR_FLOOR = 1e-12

# Jitter inside the double-log transform; keeps the score finite at p = 1.
JITTER = 1e-8


class StreamError(ValueError):
    """Invalid data or configuration (CLI exit code 2)."""


class CalibrationMismatch(StreamError):
    """A calibration table was used with a different (T, alpha) than it was built for."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required (CLI exit code 3)."""


@dataclass(frozen=True)
class MiniBatch:
    """One step of the stream: b observations sharing the time index.

    Either ``values`` (scalar observations) or ``inputs``/``labels``
    (classification examples) is set, never both.
    """

    time: int
    values: np.ndarray | None = None
    inputs: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        scalar = self.values is not None
        labeled = self.inputs is not None and self.labels is not None
        if scalar == labeled:
            raise StreamError("a batch holds either scalar values or labeled inputs")
        if labeled and len(self.inputs) != len(self.labels):
            raise StreamError("inputs and labels must have matching length")
        if self.size < 1:
            raise StreamError("empty batch")

    @property
    def size(self) -> int:
        return len(self.values) if self.values is not None else len(self.labels)

    @classmethod
    def scalars(cls, time: int, values) -> "MiniBatch":
        return cls(time=time, values=np.asarray(values, dtype=np.float64))

    @classmethod
    def labeled(cls, time: int, inputs, labels) -> "MiniBatch":
        return cls(
            time=time,
            inputs=np.asarray(inputs, dtype=np.float64),
            labels=np.asarray(labels, dtype=np.int64),
        )


@dataclass(frozen=True)
class ScoreWindow:
    """T consecutive per-batch scores, exclusive-left: the window holds the
    scores for global times start+1 .. start+T."""

    start: int
    values: np.ndarray

    @property
    def size(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SegmentStats:
    """Gaussian sufficient statistics of one score segment (MLE variance)."""

    n: int
    mean: float
    var: float

    @classmethod
    def from_values(cls, values, var_floor: float = VAR_FLOOR) -> "SegmentStats":
        arr = np.asarray(values, dtype=np.float64)
        if arr.size == 0:
            raise StreamError("empty segment")
        return cls(n=arr.size, mean=float(arr.mean()), var=mle_variance(arr, var_floor))


@dataclass(frozen=True)
class ChangepointEvent:
    """One detection. ``tau`` is the global time of the first step of the new
    segment; ``c_local`` is the raw in-window split index kept for debugging."""

    tau: int
    z: float
    threshold: float
    window_start: int
    window_end: int
    test_index: int
    c_local: int = 0

    def record(self) -> dict:
        """Serializable event record in the log format."""
        return {
            "tau": self.tau,
            "z": self.z,
            "threshold": self.threshold,
            "window_start": self.window_start,
            "window_end": self.window_end,
            "test_index": self.test_index,
        }


@dataclass(frozen=True)
class DetectorConfig:
    """Hyperparameters of the online detector.

    ``window`` is the test window size T, ``border`` the minimum per-segment
    sample size alpha, ``delta`` the per-segment Type I error budget and
    ``eta`` its geometric decay across tests. The test stride is
    D = T - 2*alpha.
    """

    window: int
    border: int
    delta: float
    eta: float = 0.99
    recover: bool = False
    var_floor: float = VAR_FLOOR
    jitter: float = JITTER

    def __post_init__(self) -> None:
        if self.window < 3 or self.border < 1:
            raise StreamError("window must be >= 3 and border >= 1")
        if not self.border < self.window / 2:
            raise StreamError("border must satisfy 0 < alpha < T/2")
        if not 0.0 < self.delta < 1.0:
            raise StreamError("delta must lie in (0, 1)")
        if not 0.0 < self.eta < 1.0:
            raise StreamError("eta must lie in (0, 1)")
        if self.var_floor <= 0.0 or self.jitter <= 0.0:
            raise StreamError("variance floor and jitter must be positive")

    @property
    def stride(self) -> int:
        return self.window - 2 * self.border


def mle_variance(values, var_floor: float = VAR_FLOOR) -> float:
    """Maximum-likelihood (1/n) variance, floored at ``var_floor``.

    Two-pass with exact mean subtraction; windows are small enough that a
    streaming approximation buys nothing.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise StreamError("empty segment")
    d = arr - arr.mean()
    return max(var_floor, float((d * d).mean()))


def score_mean_nll(losses) -> float:
    """Per-batch score for continuous observations: the mean of the item losses."""
    arr = np.asarray(losses, dtype=np.float64)
    if arr.size == 0:
        raise StreamError("empty batch")
    return float(arr.mean())


def score_transform_discrete(probabilities, eps: float = JITTER) -> float:
    """Per-batch score for discrete observations: mean of log(-log p + eps).

    The extra log pulls the heavily skewed NLL values toward normality; the
    jitter keeps the transform finite at p = 1.
    """
    if eps <= 0.0:
        raise StreamError("jitter must be positive")
    arr = np.asarray(probabilities, dtype=np.float64)
    if arr.size == 0:
        raise StreamError("empty batch")
    if np.any(arr <= 0.0) or np.any(arr > 1.0):
        raise StreamError("probability out of range")
    return float(np.log(-np.log(arr) + eps).mean())
