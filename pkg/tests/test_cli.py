import json

import numpy as np
import pytest

from cpstream import params_from_document
from cpstream.cli import load_changepoints, load_score_stream, main


def run(args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def small_table(tmp_path_factory):
    path = tmp_path_factory.mktemp("tables") / "t50a12.json"
    code = run(
        [
            "calibrate", "--window", 50, "--alpha", 12, "--sims", 100_000,
            "--seed", 7, "--deltas", "0.1,0.05,0.01,0.001,1e-4", "--out", path,
        ]
    )
    assert code == 0
    return path


class TestCalibrate:
    def test_writes_exact_schema(self, small_table):
        doc = json.loads(small_table.read_text())
        assert set(doc) == {"T", "alpha", "n_sims", "seed", "rng_name", "entries", "fit"}
        assert doc["T"] == 50 and doc["alpha"] == 12 and doc["n_sims"] == 100_000

    def test_byte_deterministic(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        args = ["calibrate", "--window", 30, "--alpha", 7, "--sims", 20_000,
                "--seed", 3, "--deltas", "0.1,0.05,0.01", "--out"]
        assert run(args + [a]) == 0
        assert run(args + [b]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_config_round_trip(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        cfg = tmp_path / "cfg.json"
        assert run(["calibrate", "--window", 30, "--alpha", 7, "--sims", 20_000,
                    "--seed", 3, "--deltas", "0.1,0.01", "--out", a,
                    "--dump-config", cfg]) == 0
        assert run(["calibrate", "--config", cfg, "--out", b]) == 0
        # same config except the output path, so the tables must match
        assert json.loads(a.read_text()) == json.loads(b.read_text())

    def test_missing_seed_is_usage_error(self, tmp_path):
        assert run(["calibrate", "--window", 30, "--alpha", 7, "--out", tmp_path / "x"]) == 1


class TestSimulateAndDetect:
    @pytest.fixture(scope="class")
    def sim_files(self, tmp_path_factory):
        d = tmp_path_factory.mktemp("sim")
        scores, true = d / "scores.csv", d / "true.csv"
        assert run(["simulate", "mean-shift", "--segments", 4, "--batch", 10,
                    "--seed", 5, "--out", scores, "--true-out", true]) == 0
        return scores, true

    def test_simulated_stream_loads(self, sim_files):
        scores, true = sim_files
        stream = load_score_stream(str(scores))
        assert stream[0].size == 10
        assert [b.time for b in stream] == list(range(1, len(stream) + 1))
        assert len(load_changepoints(str(true))) == 3

    def test_checkpoint_detect_pipeline(self, sim_files, small_table, tmp_path):
        scores, true = sim_files
        events, trace = tmp_path / "events.json", tmp_path / "trace.csv"
        assert run(["detect", "--scores", scores, "--table", small_table,
                    "--delta", 1e-3, "--model", "moving-average", "--rho", 0.1,
                    "--out", events, "--trace", trace]) == 0
        doc = json.loads(events.read_text())
        assert set(doc) == {"events", "diagnostics", "config"}
        for ev in doc["events"]:
            assert set(ev) == {"tau", "z", "threshold", "window_start", "window_end", "test_index"}
        for diag in doc["diagnostics"]:
            assert set(diag) == {"time", "z", "threshold", "delta_i", "rejected"}
        header = trace.read_text().splitlines()[0]
        assert header == "time,z,threshold,delta_i"

        metrics = tmp_path / "metrics.json"
        assert run(["evaluate", "--true", true, "--detected", events,
                    "--tolerance", 5, "--out", metrics]) == 0
        got = json.loads(metrics.read_text())
        assert got["jaccard"] == 1.0

    def test_detect_deterministic(self, sim_files, small_table, tmp_path):
        scores, _ = sim_files
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        args = ["detect", "--scores", scores, "--table", small_table, "--delta", 1e-3,
                "--model", "moving-average", "--out"]
        assert run(args + [a]) == 0
        assert run(args + [b]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_baseline_methods(self, sim_files, tmp_path):
        scores, _ = sim_files
        for method in ("bayescd", "simplecd"):
            out = tmp_path / f"{method}.json"
            assert run(["detect", "--scores", scores, "--method", method,
                        "--model", "moving-average", "--min-distance", 50,
                        "--out", out]) == 0
            doc = json.loads(out.read_text())
            assert all(ev["method"] == method for ev in doc["events"])

    def test_simplecd_needs_item_scores(self, small_table, tmp_path):
        single = tmp_path / "single.csv"
        single.write_text("t,v\n1,0.5\n2,0.7\n")
        out = tmp_path / "out.json"
        assert run(["detect", "--scores", single, "--method", "simplecd", "--out", out]) == 2


class TestScoreCsvParsing:
    def test_single_column(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text("t,v\n1,0.5\n2,0.7\n")
        stream = load_score_stream(str(f))
        assert len(stream) == 2 and stream[0].size == 1

    def test_multi_column(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text("t,v1,v2,v3\n1,0.5,0.6,0.7\n2,0.7,0.8,0.9\n")
        assert load_score_stream(str(f))[0].size == 3

    def test_decreasing_time_names_line(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text("t,v\n1,0.5\n3,0.7\n2,0.1\n")
        with pytest.raises(Exception, match="line 3"):
            load_score_stream(str(f))

    def test_malformed_value_names_line(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text("t,v\n1,0.5\n2,x\n")
        with pytest.raises(Exception, match="line 3"):
            load_score_stream(str(f))

    def test_missing_header_rejected(self, tmp_path):
        f = tmp_path / "s.csv"
        f.write_text("1,0.5\n2,0.7\n")
        with pytest.raises(Exception, match="header"):
            load_score_stream(str(f))


class TestEvaluate:
    def test_known_example(self, tmp_path, capsys):
        t, d = tmp_path / "true.csv", tmp_path / "det.csv"
        t.write_text("tau\n100\n200\n")
        d.write_text("tau\n101\n350\n")
        assert run(["evaluate", "--true", t, "--detected", d, "--tolerance", 5]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["jaccard"] == pytest.approx(1 / 3)
        assert doc["precision"] == 0.5 and doc["recall"] == 0.5


class TestClRun:
    def test_small_run_outputs_and_round_trip(self, tmp_path, small_table):
        out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
        cfgp = tmp_path / "cfg.json"
        model_path = tmp_path / "model.json"
        trace = tmp_path / "trace.csv"
        base = ["cl-run", "--tasks", 2, "--batch", 10, "--min-segment", 150,
                "--cp-prob", 0.02, "--table", small_table, "--delta", 1e-4,
                "--rho", 0.1, "--seed", 3]
        assert run(base + ["--out", out1, "--dump-config", cfgp,
                           "--save-model", model_path, "--trace", trace]) == 0
        doc = json.loads(out1.read_text())
        assert set(doc) == {
            "config", "true_cps", "detected_cps", "jaccard", "precision",
            "recall", "events", "per_test_diagnostics",
        }
        assert doc["jaccard"] == 1.0
        params = params_from_document(json.loads(model_path.read_text()))
        assert len(params["heads"]) == len(doc["detected_cps"]) + 1
        assert trace.exists()

        assert run(["cl-run", "--config", cfgp, "--out", out2]) == 0
        d1, d2 = json.loads(out1.read_text()), json.loads(out2.read_text())
        for key in ("true_cps", "detected_cps", "jaccard", "events"):
            assert d1[key] == d2[key]

    def test_checkpoint_needs_table(self, tmp_path):
        assert run(["cl-run", "--seed", 1, "--out", tmp_path / "x.json"]) == 1


class TestDiagnoseNormality:
    def test_reports_statistic(self, tmp_path, capsys):
        f = tmp_path / "s.csv"
        rows = ["t,v"] + [f"{t},{v}" for t, v in
                          enumerate(np.random.default_rng(0).standard_normal(100), start=1)]
        f.write_text("\n".join(rows) + "\n")
        assert run(["diagnose-normality", "--scores", f]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["n"] == 100 and doc["k2"] >= 0.0 and 0.0 <= doc["p"] <= 1.0


class TestErrorPaths:
    def test_unknown_flag(self):
        assert run(["calibrate", "--bogus", 1]) == 1

    def test_unknown_subcommand(self):
        assert run(["frobnicate"]) == 1

    def test_missing_file(self, tmp_path):
        assert run(["detect", "--scores", tmp_path / "nope.csv", "--method", "simplecd",
                    "--out", tmp_path / "o.json"]) == 2

    def test_unknown_config_field(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"bogus": 1}')
        assert run(["evaluate", "--config", cfg, "--true", "x", "--detected", "y"]) == 2
