"""Pluggable online models and their adapters.

A model adapter exposes four operations to the detector: an in-place gradient
update on a mini-batch, parameter snapshot/restore (snapshots are deep copies,
never views of live parameters), and scoring of a batch under a given
snapshot. Scoring under a frozen snapshot is what makes within-segment scores
i.i.d. regardless of how the live parameters move.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

from .core import JITTER, MiniBatch, StreamError, score_transform_discrete


class ModelAdapter(Protocol):
    """What the detectors need from a model.

    Snapshots are opaque deep copies; scoring under ``params=None`` means
    scoring under the current live parameters.
    """

    def update(self, batch: MiniBatch) -> None: ...
    def snapshot(self) -> Any: ...
    def restore(self, params: Any) -> None: ...
    def score(self, batch: MiniBatch, params: Any = None) -> float: ...
    def score_items(self, batch: MiniBatch, params: Any = None) -> np.ndarray: ...


def _require_scalars(batch: MiniBatch) -> np.ndarray:
    if batch.values is None:
        raise StreamError("this model consumes scalar observation batches")
    return batch.values


def _require_labeled(batch: MiniBatch) -> tuple[np.ndarray, np.ndarray]:
    if batch.inputs is None or batch.labels is None:
        raise StreamError("this model consumes labeled input batches")
    return batch.inputs, batch.labels


class ScoreStreamModel:
    """Identity adapter for streams whose values already are scores."""

    def update(self, batch: MiniBatch) -> None:
        pass

    def snapshot(self) -> None:
        return None

    def restore(self, params: None) -> None:
        pass

    def score_items(self, batch: MiniBatch, params: None = None) -> np.ndarray:
        return _require_scalars(batch)

    def score(self, batch: MiniBatch, params: None = None) -> float:
        return float(_require_scalars(batch).mean())


@dataclass
class MovingAverageModel:
    """Single-parameter tracker: theta follows the running batch means.

    One constant-rate gradient step on the mean squared loss per batch,
    theta <- theta + rho * (mean(y) - theta); the per-item score under a
    snapshot is 0.5 * (y - theta)^2.
    """

    theta: float = 0.0
    rho: float = 0.1

    def update(self, batch: MiniBatch) -> None:
        y = _require_scalars(batch)
        self.theta = self.theta + self.rho * (float(y.mean()) - self.theta)

    def snapshot(self) -> float:
        return self.theta

    def restore(self, params: float) -> None:
        self.theta = float(params)

    def score_items(self, batch: MiniBatch, params: float | None = None) -> np.ndarray:
        y = _require_scalars(batch)
        theta = self.theta if params is None else params
        return 0.5 * (y - theta) ** 2

    def score(self, batch: MiniBatch, params: float | None = None) -> float:
        return float(self.score_items(batch, params).mean())


def _relu(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class MultiHeadClassifier:
    """Shared relu trunk with one linear softmax head per task.

    Heads are spawned zero-initialized when a new task starts, so the first
    forward pass of a fresh head is exactly uniform. Training minimizes the
    current-task cross entropy plus ``lam`` times the cross entropy of every
    stored replay buffer under its own head; all losses are means over their
    items so the learning rate is batch-size independent.
    """

    def __init__(
        self,
        input_dim: int,
        hidden_dim: int,
        n_classes: int,
        rho: float,
        lam: float = 1.0,
        jitter: float = JITTER,
        seed: int = 0,
    ):
        rng = np.random.default_rng(seed)
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.n_classes = n_classes
        self.rho = rho
        self.lam = lam
        self.jitter = jitter
        scale = np.sqrt(2.0 / input_dim)
        self.w1 = rng.normal(0.0, scale, size=(hidden_dim, input_dim))
        self.b1 = np.zeros(hidden_dim)
        self.heads: list[np.ndarray] = []

    @property
    def n_heads(self) -> int:
        return len(self.heads)

    def add_head(self) -> int:
        """Attach a fresh zero head; returns its index."""
        self.heads.append(np.zeros((self.n_classes, self.hidden_dim)))
        return len(self.heads) - 1

    def snapshot(self) -> dict:
        return {
            "w1": self.w1.copy(),
            "b1": self.b1.copy(),
            "heads": [h.copy() for h in self.heads],
        }

    def restore(self, params: dict) -> None:
        self.w1 = params["w1"].copy()
        self.b1 = params["b1"].copy()
        self.heads = [h.copy() for h in params["heads"]]

    def _params(self, params: dict | None) -> dict:
        if params is None:
            return {"w1": self.w1, "b1": self.b1, "heads": self.heads}
        return params

    def features(self, x: np.ndarray, params: dict | None = None) -> np.ndarray:
        p = self._params(params)
        return _relu(np.atleast_2d(x) @ p["w1"].T + p["b1"])

    def predict_proba(self, x: np.ndarray, head: int, params: dict | None = None) -> np.ndarray:
        """Class probabilities under the given head; rows sum to one."""
        p = self._params(params)
        if not 0 <= head < len(p["heads"]):
            raise StreamError(f"unknown head {head}")
        return _softmax(self.features(x, p) @ p["heads"][head].T)

    def composite_loss(self, batch: MiniBatch, replays: Sequence, params: dict | None = None) -> float:
        """Current-task cross entropy plus lam * replayed cross entropies."""
        p = self._params(params)
        x, y = _require_labeled(batch)
        total = self._ce(x, y, len(p["heads"]) - 1, p)
        for rep in replays:
            total += self.lam * self._ce(rep.inputs, rep.labels, rep.head, p)
        return total

    def _ce(self, x: np.ndarray, y: np.ndarray, head: int, p: dict) -> float:
        if np.any(y < 0) or np.any(y >= self.n_classes):
            raise StreamError("label out of range")
        probs = self.predict_proba(x, head, p)
        picked = np.maximum(probs[np.arange(len(y)), y], 1e-300)
        return float(-np.log(picked).mean())

    def gradients(self, batch: MiniBatch, replays: Sequence, params: dict | None = None) -> dict:
        """Full gradient of composite_loss w.r.t. every parameter block."""
        p = self._params(params)
        grads = {
            "w1": np.zeros_like(p["w1"]),
            "b1": np.zeros_like(p["b1"]),
            "heads": [np.zeros_like(h) for h in p["heads"]],
        }
        x, y = _require_labeled(batch)
        self._accumulate_ce_grads(x, y, len(p["heads"]) - 1, 1.0, p, grads)
        for rep in replays:
            self._accumulate_ce_grads(rep.inputs, rep.labels, rep.head, self.lam, p, grads)
        return grads

    def _accumulate_ce_grads(self, x, y, head: int, weight: float, p: dict, grads: dict) -> None:
        if np.any(y < 0) or np.any(y >= self.n_classes):
            raise StreamError("label out of range")
        x = np.atleast_2d(x)
        n = x.shape[0]
        a = x @ p["w1"].T + p["b1"]
        phi = _relu(a)
        probs = _softmax(phi @ p["heads"][head].T)
        g = probs.copy()
        g[np.arange(n), y] -= 1.0
        g *= weight / n
        grads["heads"][head] += g.T @ phi
        dphi = g @ p["heads"][head]
        da = dphi * (a > 0.0)
        grads["w1"] += da.T @ x
        grads["b1"] += da.sum(axis=0)

    def train_step(self, batch: MiniBatch, replays: Sequence = ()) -> None:
        """One constant-rate gradient step on the composite loss."""
        grads = self.gradients(batch, replays)
        self.w1 -= self.rho * grads["w1"]
        self.b1 -= self.rho * grads["b1"]
        for head, dh in zip(self.heads, grads["heads"]):
            head -= self.rho * dh

    def transformed_score(self, batch: MiniBatch, params: dict | None = None, head: int | None = None) -> float:
        """Double-log score of the true-label probabilities under ``params``.

        Defaults to the newest head in the snapshot, which is the head of the
        task the snapshot was taken in.
        """
        p = self._params(params)
        if head is None:
            head = len(p["heads"]) - 1
        x, y = _require_labeled(batch)
        probs = self.predict_proba(x, head, p)
        picked = np.minimum(np.maximum(probs[np.arange(len(y)), y], 1e-300), 1.0)
        return score_transform_discrete(picked, self.jitter)

    def item_scores(self, batch: MiniBatch, params: dict | None = None, head: int | None = None) -> np.ndarray:
        p = self._params(params)
        if head is None:
            head = len(p["heads"]) - 1
        x, y = _require_labeled(batch)
        probs = self.predict_proba(x, head, p)
        picked = np.minimum(np.maximum(probs[np.arange(len(y)), y], 1e-300), 1.0)
        return np.log(-np.log(picked) + self.jitter)


class ClassifierAdapter:
    """Couples a MultiHeadClassifier to a detector.

    ``replays`` is a live list shared with the harness: buffers appended
    there are picked up by every subsequent update step.
    """

    def __init__(self, model: MultiHeadClassifier, replays: list):
        self.model = model
        self.replays = replays

    def update(self, batch: MiniBatch) -> None:
        self.model.train_step(batch, self.replays)

    def snapshot(self) -> dict:
        return self.model.snapshot()

    def restore(self, params: dict) -> None:
        self.model.restore(params)

    def score(self, batch: MiniBatch, params: dict | None = None) -> float:
        return self.model.transformed_score(batch, params)

    def score_items(self, batch: MiniBatch, params: dict | None = None) -> np.ndarray:
        return self.model.item_scores(batch, params)


def params_document(params) -> dict:
    """Serialize a parameter snapshot to a JSON-ready document."""
    if params is None:
        return {"kind": "none"}
    if isinstance(params, (int, float)):
        return {"kind": "scalar", "value": float(params)}
    if isinstance(params, dict):
        def arr(a):
            return {"shape": list(a.shape), "data": np.asarray(a, dtype=np.float64).ravel().tolist()}

        return {
            "kind": "multihead",
            "w1": arr(params["w1"]),
            "b1": arr(params["b1"]),
            "heads": [arr(h) for h in params["heads"]],
        }
    raise StreamError(f"cannot serialize parameters of type {type(params).__name__}")


def params_from_document(doc: dict):
    kind = doc.get("kind")
    if kind == "none":
        return None
    if kind == "scalar":
        return float(doc["value"])
    if kind == "multihead":
        def arr(spec):
            return np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])

        return {
            "w1": arr(doc["w1"]),
            "b1": arr(doc["b1"]),
            "heads": [arr(h) for h in doc["heads"]],
        }
    raise StreamError(f"unknown parameter document kind: {kind!r}")
