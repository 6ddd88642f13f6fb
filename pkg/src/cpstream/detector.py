"""Online checkpoint detector.

The detector consumes a stream of mini-batches, trains the model as data
arrive, and every D = T - 2*alpha steps snapshots the parameters. Once the
buffer holds T batches it periodically scores them under the checkpoint that
lags exactly T steps and runs the offline window test with an annealed error
level, so the total false-alarm probability inside one segment stays below
the configured delta. On a detection the segment bookkeeping restarts and,
optionally, the model is rewound to the newest checkpoint taken at or before
the estimated changepoint.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .calibration import CalibrationTable
from .core import (
    CalibrationMismatch,
    ChangepointEvent,
    DetectorConfig,
    MiniBatch,
    NumericError,
    ScoreWindow,
    StreamError,
)
from .glr import offline_detect
from .models import ModelAdapter


def error_schedule(delta: float, eta: float, i: int) -> float:
    """Error level of the i-th test since the segment started: (1-eta)*eta^i*delta.

    The levels sum to delta over all i, which is what bounds the per-segment
    false-alarm probability.
    """
    if i < 0:
        raise StreamError("test index must be >= 0")
    return (1.0 - eta) * eta**i * delta


@dataclass(frozen=True)
class Checkpoint:
    """A parameter snapshot taken at a past global step."""

    time: int
    params: object


@dataclass(frozen=True)
class TestDiagnostic:
    """Per-test trace record: what was tested, against what threshold."""

    time: int
    z: float
    threshold: float
    delta_i: float | None
    rejected: bool

    def record(self) -> dict:
        return {
            "time": self.time,
            "z": self.z,
            "threshold": self.threshold,
            "delta_i": self.delta_i,
            "rejected": self.rejected,
        }


def nearest_left_checkpoint(checkpoints: dict[int, object], tau: int) -> tuple[int, object]:
    """The checkpoint with the largest time <= tau."""
    eligible = [t for t in checkpoints if t <= tau]
    if not eligible:
        raise StreamError(f"no checkpoint at or before tau={tau}")
    best = max(eligible)
    return best, checkpoints[best]


class Detector:
    """Stateful online detector; one instance serves exactly one stream."""

    def __init__(self, config: DetectorConfig, table: CalibrationTable, model: ModelAdapter):
        if table.T != config.window or table.alpha != config.border:
            raise CalibrationMismatch(
                f"calibration mismatch: table (T={table.T}, alpha={table.alpha}) vs "
                f"config (T={config.window}, alpha={config.border})"
            )
        self.config = config
        self.table = table
        self.model = model
        self._global: int | None = None  # time of the last consumed batch
        self._origin = 0  # global time anchoring the current segment clock
        self._i = 0
        self._buffer: deque[MiniBatch] = deque(maxlen=config.window)
        # The initial parameters are the segment's time-zero checkpoint.
        self._checkpoints: dict[int, object] = {0: model.snapshot()}
        self.events: list[ChangepointEvent] = []
        self.diagnostics: list[TestDiagnostic] = []

    @property
    def checkpoint_times(self) -> list[int]:
        return sorted(self._checkpoints)

    @property
    def buffer_size(self) -> int:
        return len(self._buffer)

    @property
    def test_index(self) -> int:
        return self._i

    def step(self, batch: MiniBatch) -> ChangepointEvent | None:
        """Consume the next batch; returns an event when a test rejects."""
        if self._global is None:
            # First batch defines the stream's time coordinates.
            self._origin = batch.time - 1
            self._checkpoints = {self._origin: self._checkpoints.popitem()[1]}
        elif batch.time != self._global + 1:
            raise StreamError(
                f"non-monotone stream: got t={batch.time}, expected {self._global + 1}"
            )
        self._global = batch.time
        self._buffer.append(batch)
        self.model.update(batch)

        cfg = self.config
        rel = self._global - self._origin
        if rel % cfg.stride == 0:
            # Snapshot after the update so later windows never contain data
            # the checkpoint has already seen.
            self._checkpoints[self._global] = self.model.snapshot()
        if rel == self._i * cfg.stride + cfg.window:
            return self._run_test()
        return None

    def _run_test(self) -> ChangepointEvent | None:
        cfg = self.config
        ckpt_time = self._global - cfg.window
        params = self._checkpoints[ckpt_time]
        values = np.array([self.model.score(b, params) for b in self._buffer])
        if not np.all(np.isfinite(values)):
            raise NumericError("non-finite score in test window")
        window = ScoreWindow(start=ckpt_time, values=values)
        delta_i = error_schedule(cfg.delta, cfg.eta, self._i)
        result = offline_detect(window, cfg.border, delta_i, self.table, cfg.var_floor)
        self.diagnostics.append(
            TestDiagnostic(
                time=self._global,
                z=result.z,
                threshold=result.threshold,
                delta_i=delta_i,
                rejected=result.reject,
            )
        )
        if not result.reject:
            self._i += 1
            del self._checkpoints[ckpt_time]
            return None
        tau = ckpt_time + result.c_star
        event = ChangepointEvent(
            tau=tau,
            z=result.z,
            threshold=result.threshold,
            window_start=ckpt_time,
            window_end=self._global,
            test_index=self._i,
            c_local=result.c_star,
        )
        self.events.append(event)
        self.reset(tau, recover=cfg.recover)
        return event

    def reset(self, tau: int, recover: bool | None = None) -> None:
        """Start a new segment after a detection at ``tau``.

        With ``recover`` the model is rewound to the newest checkpoint taken
        at or before tau, undoing updates contaminated by post-changepoint
        data; otherwise the current parameters carry over. Either way the
        buffer empties, the test index resets and a fresh time-zero
        checkpoint anchors the next segment.
        """
        if recover is None:
            recover = self.config.recover
        if recover:
            _, params = nearest_left_checkpoint(self._checkpoints, tau)
            self.model.restore(params)
        self._buffer.clear()
        self._i = 0
        self._origin = self._global if self._global is not None else 0
        self._checkpoints = {self._origin: self.model.snapshot()}

    def rebase_origin_checkpoint(self) -> None:
        """Re-snapshot the segment's time-zero checkpoint.

        Call after mutating the model structurally at a segment boundary
        (e.g. attaching a new classification head) so the first window of the
        new segment is scored under parameters that include the change.
        """
        self._checkpoints[self._origin] = self.model.snapshot()


def event_log_document(
    events, diagnostics, method: str | None = None, config: dict | None = None
) -> dict:
    """Assemble the serializable detection log."""
    recs = []
    for ev in events:
        rec = ev.record() if isinstance(ev, ChangepointEvent) else dict(ev)
        if method is not None:
            rec["method"] = method
        recs.append(rec)
    doc = {
        "events": recs,
        "diagnostics": [
            d.record() if isinstance(d, TestDiagnostic) else dict(d) for d in diagnostics
        ],
    }
    if config is not None:
        doc["config"] = config
    return doc
