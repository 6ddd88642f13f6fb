"""Command-line front end.

Subcommands: calibrate, detect, simulate (mean-shift | cl-tasks), cl-run,
evaluate, diagnose-normality. Every randomized command requires --seed and
all outputs are byte-deterministic for identical configuration. Each command
accepts --config FILE (JSON with the same field names as the flags; explicit
flags win) and --dump-config FILE to write back the resolved configuration,
which re-runs to identical outputs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .baselines import DEFAULT_HAZARD, BocpdDetector, SimpleCdDetector
from .calibration import DEFAULT_DELTAS, build_table, load_table, save_table
from .clharness import (
    DEFAULT_REPLAY_SIZE,
    TaskStreamSpec,
    make_mean_shift_stream,
    make_task_stream,
    run_continual,
)
from .core import DetectorConfig, MiniBatch, NumericError, StreamError
from .detector import Detector, event_log_document
from .evalkit import match_changepoints, normality_test
from .models import MovingAverageModel, ScoreStreamModel, params_document


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, not argparse's 2
        raise UsageError(message)


# ---------------------------------------------------------------------------
# configuration plumbing

@dataclass(frozen=True)
class Field:
    name: str
    coerce: Callable[[Any], Any]
    default: Any = None
    required: bool = False


def _boolean(v) -> bool:
    if isinstance(v, bool):
        return v
    raise StreamError(f"expected a boolean, got {v!r}")


def _delta_list(v) -> list[float]:
    if isinstance(v, str):
        v = [part for part in v.split(",") if part]
    out = [float(x) for x in v]
    if not out:
        raise StreamError("empty delta list")
    return out


def resolve_config(args: argparse.Namespace, fields: list[Field]) -> dict:
    """Merge config file < CLI flags < defaults into one validated dict."""
    cfg: dict[str, Any] = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as exc:
            raise StreamError(f"malformed config file {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise StreamError("config file must hold a JSON object")
        known = {f.name for f in fields}
        unknown = sorted(set(loaded) - known)
        if unknown:
            raise StreamError(f"unknown config fields: {', '.join(unknown)}")
        cfg.update(loaded)
    for f in fields:
        flag_value = getattr(args, f.name.replace("-", "_"), None)
        if flag_value is not None:
            cfg[f.name] = flag_value
        elif f.name not in cfg:
            if f.required:
                raise UsageError(f"missing required option --{f.name}")
            cfg[f.name] = f.default
    for f in fields:
        if cfg[f.name] is not None:
            cfg[f.name] = f.coerce(cfg[f.name])
    return cfg


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write_doc(path: str | None, doc: dict) -> None:
    text = _dump_json(doc)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _maybe_dump_config(args, cfg: dict) -> None:
    if getattr(args, "dump_config", None):
        with open(args.dump_config, "w", encoding="utf-8") as fh:
            fh.write(_dump_json(cfg))


# ---------------------------------------------------------------------------
# file formats

def load_score_stream(path: str) -> list[MiniBatch]:
    """Parse a score CSV: header ``t,v...``, one batch per row, consecutive t."""
    batches: list[MiniBatch] = []
    prev_t: int | None = None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0].strip() != "t":
            raise StreamError(f"{path}: expected header 't,<score columns>'")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise StreamError(f"{path}: line {lineno}: expected {width} fields, got {len(row)}")
            try:
                t = int(row[0])
                values = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise StreamError(f"{path}: line {lineno}: {exc}") from exc
            if prev_t is not None and t <= prev_t:
                raise StreamError(f"{path}: line {lineno}: non-monotone time {t} after {prev_t}")
            if prev_t is not None and t != prev_t + 1:
                raise StreamError(f"{path}: line {lineno}: non-consecutive time {t} after {prev_t}")
            prev_t = t
            batches.append(MiniBatch.scalars(t, values))
    if not batches:
        raise StreamError(f"{path}: no data rows")
    return batches


def write_score_stream(path: str, batches: list[MiniBatch]) -> None:
    width = batches[0].size
    header = ["t"] + (["v"] if width == 1 else [f"v{i + 1}" for i in range(width)])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for b in batches:
            writer.writerow([b.time] + [repr(float(v)) for v in b.values])


def write_labeled_stream(path: str, batches: list[MiniBatch]) -> None:
    dim = batches[0].inputs.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "label"] + [f"x{i}" for i in range(dim)])
        for b in batches:
            for x, y in zip(b.inputs, b.labels):
                writer.writerow([b.time, int(y)] + [repr(float(v)) for v in x])


def write_changepoints(path: str, taus: list[int]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau"])
        for tau in taus:
            writer.writerow([tau])


def load_changepoints(path: str) -> list[int]:
    """Changepoint list from a ``tau`` CSV or a detection-log JSON."""
    if path.endswith(".json"):
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise StreamError(f"malformed event log {path}: {exc}") from exc
        try:
            return [int(ev["tau"]) for ev in doc["events"]]
        except (KeyError, TypeError) as exc:
            raise StreamError(f"{path}: not a detection log: {exc}") from exc
    taus = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "tau":
            raise StreamError(f"{path}: expected header 'tau'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                taus.append(int(row[0]))
            except ValueError as exc:
                raise StreamError(f"{path}: line {lineno}: {exc}") from exc
    return taus


def write_trace(path: str, diagnostics) -> None:
    """Long-format per-test trace for external plotting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "z", "threshold", "delta_i"])
        for d in diagnostics:
            delta = "" if d.delta_i is None else repr(d.delta_i)
            writer.writerow([d.time, repr(d.z), repr(d.threshold), delta])


# ---------------------------------------------------------------------------
# subcommands

CALIBRATE_FIELDS = [
    Field("window", int, required=True),
    Field("alpha", int, required=True),
    Field("sims", int, default=1_000_000),
    Field("seed", int, required=True),
    Field("deltas", _delta_list, default=list(DEFAULT_DELTAS)),
    Field("out", str, required=True),
]


def cmd_calibrate(args) -> int:
    cfg = resolve_config(args, CALIBRATE_FIELDS)
    _maybe_dump_config(args, cfg)
    table = build_table(cfg["window"], cfg["alpha"], cfg["sims"], cfg["seed"], cfg["deltas"])
    save_table(table, cfg["out"])
    print(f"calibrated T={table.T} alpha={table.alpha} with {table.n_sims} simulations -> {cfg['out']}")
    return 0


DETECT_FIELDS = [
    Field("scores", str, required=True),
    Field("method", str, default="checkpoint"),
    Field("table", str),
    Field("delta", float),
    Field("eta", float, default=0.99),
    Field("model", str, default="identity"),
    Field("rho", float, default=0.1),
    Field("theta0", float, default=0.0),
    Field("cutoff", float),
    Field("min-distance", int),
    Field("hazard", float, default=DEFAULT_HAZARD),
    Field("recover", _boolean, default=False),
    Field("out", str, required=True),
    Field("trace", str),
]


def _make_score_adapter(cfg):
    if cfg["model"] == "identity":
        return ScoreStreamModel()
    if cfg["model"] == "moving-average":
        return MovingAverageModel(theta=cfg["theta0"], rho=cfg["rho"])
    raise StreamError(f"unknown model {cfg['model']!r}")


def cmd_detect(args) -> int:
    cfg = resolve_config(args, DETECT_FIELDS)
    _maybe_dump_config(args, cfg)
    method = cfg["method"]
    stream = load_score_stream(cfg["scores"])
    adapter = _make_score_adapter(cfg)

    if method == "checkpoint":
        if cfg["table"] is None or cfg["delta"] is None:
            raise UsageError("the checkpoint method needs --table and --delta")
        table = load_table(cfg["table"])
        det_config = DetectorConfig(
            window=table.T,
            border=table.alpha,
            delta=cfg["delta"],
            eta=cfg["eta"],
            recover=cfg["recover"],
        )
        det = Detector(det_config, table, adapter)
        for batch in stream:
            det.step(batch)
    elif method in ("bayescd", "simplecd"):
        min_distance = cfg["min-distance"] if cfg["min-distance"] is not None else 100
        if method == "bayescd":
            det = BocpdDetector(
                cutoff=0.5 if cfg["cutoff"] is None else cfg["cutoff"],
                hazard=cfg["hazard"],
                min_distance=min_distance,
            )
            for batch in stream:
                score = adapter.score(batch)
                adapter.update(batch)
                det.step(score, batch.time)
        else:
            det = SimpleCdDetector(
                cutoff=4.0 if cfg["cutoff"] is None else cfg["cutoff"],
                min_distance=min_distance,
            )
            for batch in stream:
                items = adapter.score_items(batch)
                adapter.update(batch)
                det.step(items, batch.time)
    else:
        raise UsageError(f"unknown method {method!r}")

    doc = event_log_document(
        det.events,
        det.diagnostics,
        method=None if method == "checkpoint" else method,
        config=cfg,
    )
    _write_doc(cfg["out"], doc)
    if cfg["trace"]:
        write_trace(cfg["trace"], det.diagnostics)
    print(f"{len(det.events)} event(s) over {len(stream)} steps -> {cfg['out']}")
    return 0


SIM_MEAN_SHIFT_FIELDS = [
    Field("segments", int, default=7),
    Field("min-length", int, default=220),
    Field("max-length", int, default=320),
    Field("shift-min", float, default=4.5),
    Field("shift-max", float, default=7.0),
    Field("noise", float, default=1.0),
    Field("batch", int, default=1),
    Field("seed", int, required=True),
    Field("out", str, required=True),
    Field("true-out", str),
]


def cmd_simulate_mean_shift(args) -> int:
    cfg = resolve_config(args, SIM_MEAN_SHIFT_FIELDS)
    _maybe_dump_config(args, cfg)
    batches, true_cps = make_mean_shift_stream(
        n_segments=cfg["segments"],
        segment_range=(cfg["min-length"], cfg["max-length"]),
        shift_range=(cfg["shift-min"], cfg["shift-max"]),
        noise=cfg["noise"],
        batch_size=cfg["batch"],
        seed=cfg["seed"],
    )
    write_score_stream(cfg["out"], batches)
    if cfg["true-out"]:
        write_changepoints(cfg["true-out"], true_cps)
    print(f"{len(batches)} steps, {len(true_cps)} changepoints -> {cfg['out']}")
    return 0


SIM_CL_TASKS_FIELDS = [
    Field("tasks", int, required=True),
    Field("batch", int, required=True),
    Field("input-dim", int, default=8),
    Field("classes", int, default=2),
    Field("min-segment", int, default=500),
    Field("cp-prob", float, default=0.005),
    Field("spread", float, default=3.0),
    Field("noise", float, default=1.0),
    Field("seed", int, required=True),
    Field("out", str, required=True),
    Field("true-out", str),
]


def _task_spec_from(cfg) -> TaskStreamSpec:
    return TaskStreamSpec(
        num_tasks=cfg["tasks"],
        batch_size=cfg["batch"],
        input_dim=cfg["input-dim"],
        n_classes=cfg["classes"],
        min_segment=cfg["min-segment"],
        cp_prob=cfg["cp-prob"],
        class_spread=cfg["spread"],
        noise=cfg["noise"],
        seed=cfg["seed"],
    )


def cmd_simulate_cl_tasks(args) -> int:
    cfg = resolve_config(args, SIM_CL_TASKS_FIELDS)
    _maybe_dump_config(args, cfg)
    batches, true_cps = make_task_stream(_task_spec_from(cfg))
    write_labeled_stream(cfg["out"], batches)
    if cfg["true-out"]:
        write_changepoints(cfg["true-out"], true_cps)
    print(f"{len(batches)} steps, {len(true_cps)} changepoints -> {cfg['out']}")
    return 0


CL_RUN_FIELDS = [
    Field("tasks", int, default=10),
    Field("batch", int, default=20),
    Field("input-dim", int, default=8),
    Field("classes", int, default=2),
    Field("min-segment", int, default=500),
    Field("cp-prob", float, default=0.005),
    Field("spread", float, default=3.0),
    Field("noise", float, default=1.0),
    Field("method", str, default="checkpoint"),
    Field("table", str),
    Field("window", int, default=100),
    Field("alpha", int, default=25),
    Field("delta", float, default=1e-4),
    Field("eta", float, default=0.99),
    Field("cutoff", float),
    Field("rho", float, default=0.05),
    Field("lam", float, default=1.0),
    Field("hidden", int, default=16),
    Field("replay-size", int, default=DEFAULT_REPLAY_SIZE),
    Field("recover", _boolean, default=True),
    Field("tolerance", int, default=5),
    Field("seed", int, required=True),
    Field("out", str, required=True),
    Field("trace", str),
    Field("save-model", str),
]


def cmd_cl_run(args) -> int:
    cfg = resolve_config(args, CL_RUN_FIELDS)
    _maybe_dump_config(args, cfg)
    table = None
    window, alpha = cfg["window"], cfg["alpha"]
    if cfg["method"] == "checkpoint":
        if cfg["table"] is None:
            raise UsageError("the checkpoint method needs --table")
        table = load_table(cfg["table"])
        window, alpha = table.T, table.alpha
    det_config = DetectorConfig(
        window=window, border=alpha, delta=cfg["delta"], eta=cfg["eta"], recover=cfg["recover"]
    )
    result = run_continual(
        _task_spec_from(cfg),
        cfg["method"],
        det_config,
        table,
        cutoff=cfg["cutoff"],
        hidden_dim=cfg["hidden"],
        rho=cfg["rho"],
        lam=cfg["lam"],
        replay_size=cfg["replay-size"],
        recover=cfg["recover"],
    )
    metrics = match_changepoints(result.true_changepoints, result.detected, cfg["tolerance"])
    doc = {
        "config": cfg,
        "true_cps": result.true_changepoints,
        "detected_cps": result.detected,
        "jaccard": metrics.jaccard,
        "precision": metrics.precision,
        "recall": metrics.recall,
        "events": [
            dict(ev.record(), method=cfg["method"]) if cfg["method"] != "checkpoint" else ev.record()
            for ev in result.events
        ],
        "per_test_diagnostics": [d.record() for d in result.diagnostics],
    }
    _write_doc(cfg["out"], doc)
    if cfg["trace"]:
        write_trace(cfg["trace"], result.diagnostics)
    if cfg["save-model"]:
        with open(cfg["save-model"], "w", encoding="utf-8") as fh:
            fh.write(_dump_json(params_document(result.model.snapshot())))
    print(
        f"jaccard {metrics.jaccard:.3f} ({len(result.detected)} detected / "
        f"{len(result.true_changepoints)} true) -> {cfg['out']}"
    )
    return 0


EVALUATE_FIELDS = [
    Field("true", str, required=True),
    Field("detected", str, required=True),
    Field("tolerance", int, default=5),
    Field("out", str),
]


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args, EVALUATE_FIELDS)
    _maybe_dump_config(args, cfg)
    truth = load_changepoints(cfg["true"])
    detected = load_changepoints(cfg["detected"])
    metrics = match_changepoints(truth, detected, cfg["tolerance"])
    doc = dict(metrics.record(), config=cfg)
    _write_doc(cfg["out"], doc)
    if cfg["out"]:
        print(f"jaccard {metrics.jaccard:.3f} -> {cfg['out']}")
    return 0


DIAGNOSE_FIELDS = [
    Field("scores", str, required=True),
    Field("out", str),
]


def cmd_diagnose_normality(args) -> int:
    cfg = resolve_config(args, DIAGNOSE_FIELDS)
    _maybe_dump_config(args, cfg)
    stream = load_score_stream(cfg["scores"])
    series = np.array([float(b.values.mean()) for b in stream])
    k2, p = normality_test(series)
    doc = {"config": cfg, "n": int(series.size), "k2": k2, "p": p}
    _write_doc(cfg["out"], doc)
    if cfg["out"]:
        print(f"K2 {k2:.3f}, p {p:.4g} -> {cfg['out']}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly

def _add_fields(parser: argparse.ArgumentParser, fields: list[Field]) -> None:
    parser.add_argument("--config", help="JSON config file; explicit flags override it")
    parser.add_argument("--dump-config", help="write the resolved config to this path")
    for f in fields:
        flag = f"--{f.name}"
        if f.coerce is _boolean:
            parser.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
        elif f.coerce is _delta_list:
            parser.add_argument(flag, type=str, default=None)
        elif f.coerce in (int, float, str):
            parser.add_argument(flag, type=f.coerce, default=None)
        else:
            parser.add_argument(flag, type=str, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cpstream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="simulate null statistics and write a threshold table")
    _add_fields(p, CALIBRATE_FIELDS)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("detect", help="run a detector over a score CSV")
    _add_fields(p, DETECT_FIELDS)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("simulate", help="generate synthetic streams")
    sim_sub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    q = sim_sub.add_parser("mean-shift", help="scalar series with abrupt mean shifts")
    _add_fields(q, SIM_MEAN_SHIFT_FIELDS)
    q.set_defaults(func=cmd_simulate_mean_shift)
    q = sim_sub.add_parser("cl-tasks", help="labeled Gaussian-cluster task stream")
    _add_fields(q, SIM_CL_TASKS_FIELDS)
    q.set_defaults(func=cmd_simulate_cl_tasks)

    p = sub.add_parser("cl-run", help="continual-learning run with online detection")
    _add_fields(p, CL_RUN_FIELDS)
    p.set_defaults(func=cmd_cl_run)

    p = sub.add_parser("evaluate", help="match detected changepoints against the truth")
    _add_fields(p, EVALUATE_FIELDS)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("diagnose-normality", help="normality check of a score series")
    _add_fields(p, DIAGNOSE_FIELDS)
    p.set_defaults(func=cmd_diagnose_normality)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except StreamError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
