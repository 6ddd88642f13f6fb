"""Synthetic task streams and the continual-learning loop.

Task streams replace real image benchmarks with Gaussian-cluster
classification tasks: each task draws fresh class means, labels are reused
across tasks (so labels alone never reveal a boundary), and segment lengths
are a minimum length plus a geometric tail. The loop trains a shared-trunk
multi-head classifier online, runs one of the three detectors, and on every
detection freezes a replay buffer for the ended task, spawns a fresh head,
and (with the checkpoint detector) rewinds the parameters to the newest
checkpoint left of the estimated changepoint.
"""
from __future__ import annotations

import dataclasses
import math
import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .baselines import BocpdDetector, SimpleCdDetector
from .calibration import CalibrationTable
from .core import ChangepointEvent, DetectorConfig, MiniBatch, StreamError
from .detector import Detector
from .models import ClassifierAdapter, MultiHeadClassifier

METHODS = ("checkpoint", "bayescd", "simplecd")

DEFAULT_REPLAY_SIZE = 100


@dataclass(frozen=True)
class TaskStreamSpec:
    """Generator settings for a synthetic multi-task classification stream."""

    num_tasks: int
    batch_size: int
    input_dim: int = 8
    n_classes: int = 2
    min_segment: int = 500
    cp_prob: float = 0.005
    class_spread: float = 3.0
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_tasks < 1 or self.batch_size < 1:
            raise StreamError("need at least one task and one item per batch")
        if not 0.0 < self.cp_prob <= 1.0:
            raise StreamError("cp_prob must lie in (0, 1]")
        if self.min_segment < 1:
            raise StreamError("min_segment must be >= 1")


def make_task_stream(spec: TaskStreamSpec) -> tuple[list[MiniBatch], list[int]]:
    """Generate the stream and the true changepoints (first step of each new task)."""
    rng = np.random.default_rng(spec.seed)
    batches: list[MiniBatch] = []
    true_cps: list[int] = []
    t = 0
    for k in range(spec.num_tasks):
        if k > 0:
            true_cps.append(t + 1)
        means = rng.normal(0.0, spec.class_spread, size=(spec.n_classes, spec.input_dim))
        length = spec.min_segment + int(rng.geometric(spec.cp_prob))
        for _ in range(length):
            t += 1
            labels = rng.integers(0, spec.n_classes, size=spec.batch_size)
            x = means[labels] + spec.noise * rng.standard_normal(
                (spec.batch_size, spec.input_dim)
            )
            batches.append(MiniBatch.labeled(t, x, labels))
    return batches, true_cps


def make_mean_shift_stream(
    n_segments: int,
    segment_range: tuple[int, int] = (220, 320),
    shift_range: tuple[float, float] = (4.5, 7.0),
    noise: float = 1.0,
    batch_size: int = 1,
    seed: int = 0,
) -> tuple[list[MiniBatch], list[int]]:
    """Scalar series with abrupt mean shifts, for the moving-average tracker.

    Every boundary shifts the segment mean upward by at least
    ``shift_range[0]`` noise standard deviations. Shifts share a direction so
    that consecutive segments stay distinguishable under any fixed reference
    parameter: a squared-error score depends on the mean only through its
    distance to the reference, which a sign-flipping walk can leave unchanged.
    """
    if n_segments < 1:
        raise StreamError("need at least one segment")
    rng = np.random.default_rng(seed)
    batches: list[MiniBatch] = []
    true_cps: list[int] = []
    mean = 0.0
    t = 0
    for k in range(n_segments):
        if k > 0:
            mean += rng.uniform(*shift_range) * noise
            true_cps.append(t + 1)
        length = int(rng.integers(segment_range[0], segment_range[1] + 1))
        for _ in range(length):
            t += 1
            y = mean + noise * rng.standard_normal(batch_size)
            batches.append(MiniBatch.scalars(t, y))
    return batches, true_cps


@dataclass(frozen=True)
class ReplayBuffer:
    """Frozen examples from one task's earliest batches, keyed by its head."""

    head: int
    inputs: np.ndarray
    labels: np.ndarray

    @property
    def size(self) -> int:
        return len(self.labels)


def build_replay_buffer(
    batches, head: int, size: int = DEFAULT_REPLAY_SIZE, rng: np.random.Generator | None = None
) -> ReplayBuffer:
    """Uniform subsample of ``size`` examples from the given early batches."""
    if not batches:
        raise StreamError("no batches available for the replay buffer")
    inputs = np.concatenate([b.inputs for b in batches])
    labels = np.concatenate([b.labels for b in batches])
    n = len(labels)
    if n <= size:
        if n < size:
            warnings.warn(
                f"replay buffer for head {head}: only {n} of {size} requested examples available",
                stacklevel=2,
            )
        return ReplayBuffer(head=head, inputs=inputs.copy(), labels=labels.copy())
    if rng is None:
        rng = np.random.default_rng(0)
    idx = np.sort(rng.choice(n, size=size, replace=False))
    return ReplayBuffer(head=head, inputs=inputs[idx], labels=labels[idx])


@dataclass
class CLRunResult:
    model: MultiHeadClassifier
    detected: list[int]
    true_changepoints: list[int]
    replay_buffers: list[ReplayBuffer]
    events: list[ChangepointEvent]
    diagnostics: list


def run_continual(
    spec: TaskStreamSpec,
    method: str,
    config: DetectorConfig,
    table: CalibrationTable | None = None,
    *,
    cutoff: float | None = None,
    hidden_dim: int = 16,
    rho: float = 0.05,
    lam: float = 1.0,
    replay_size: int = DEFAULT_REPLAY_SIZE,
    recover: bool = True,
    max_steps: int | None = None,
    model_seed: int | None = None,
) -> CLRunResult:
    """Train online with unknown task boundaries and detect them on the fly.

    ``method`` selects the detector; the checkpoint detector needs ``table``,
    the baselines need ``cutoff``. ``config.window`` doubles as the minimum
    distance between baseline detections. ``max_steps`` truncates the stream,
    which is handy for inspecting the model right after a detection.
    """
    if method not in METHODS:
        raise StreamError(f"unknown method {method!r}; expected one of {METHODS}")
    if spec.min_segment < config.window:
        raise StreamError("min_segment must be at least the detector window")
    stream, true_cps = make_task_stream(spec)
    if max_steps is not None:
        stream = stream[:max_steps]
        true_cps = [tau for tau in true_cps if tau <= len(stream)]

    model = MultiHeadClassifier(
        input_dim=spec.input_dim,
        hidden_dim=hidden_dim,
        n_classes=spec.n_classes,
        rho=rho,
        lam=lam,
        jitter=config.jitter,
        seed=spec.seed + 1 if model_seed is None else model_seed,
    )
    model.add_head()
    replays: list[ReplayBuffer] = []
    adapter = ClassifierAdapter(model, replays)
    replay_rng = np.random.default_rng(spec.seed + 2)

    if method == "checkpoint":
        if table is None:
            raise StreamError("the checkpoint method needs a calibration table")
        det = Detector(dataclasses.replace(config, recover=recover), table, adapter)
    elif method == "bayescd":
        det = BocpdDetector(cutoff=0.5 if cutoff is None else cutoff, min_distance=config.window)
    else:
        det = SimpleCdDetector(cutoff=4.0 if cutoff is None else cutoff, min_distance=config.window)

    pool_target = math.ceil(replay_size / spec.batch_size)
    pool: list[MiniBatch] = []
    task_start = stream[0].time if stream else 1
    recent: deque[MiniBatch] = deque(maxlen=config.window + pool_target)
    detected: list[int] = []

    for batch in stream:
        recent.append(batch)
        if len(pool) < pool_target and batch.time >= task_start:
            pool.append(batch)
        if method == "checkpoint":
            event = det.step(batch)
        else:
            # One-step scores under the pre-update parameters; no snapshot
            # copy is needed because the update happens after scoring.
            if method == "bayescd":
                score = adapter.score(batch)
                adapter.update(batch)
                event = det.step(score, batch.time)
            else:
                items = adapter.score_items(batch)
                adapter.update(batch)
                event = det.step(items, batch.time)
        if event is None:
            continue
        detected.append(event.tau)
        # The pool holds the ended task's earliest batches; freeze its replay
        # buffer before the next task's head exists.
        replays.append(
            build_replay_buffer(pool, head=model.n_heads - 1, size=replay_size, rng=replay_rng)
        )
        model.add_head()
        if method == "checkpoint":
            # The fresh head must be part of the segment's time-zero snapshot.
            det.rebase_origin_checkpoint()
        task_start = event.tau
        pool = [b for b in recent if b.time >= task_start][:pool_target]

    return CLRunResult(
        model=model,
        detected=detected,
        true_changepoints=true_cps,
        replay_buffers=replays,
        events=list(det.events),
        diagnostics=list(det.diagnostics),
    )
