import json

import numpy as np
import pytest

from cpstream import (
    CalibrationTable,
    StreamError,
    build_table,
    fit_threshold,
    load_table,
    quantile_table,
    save_table,
    simulate_null_z,
    threshold_for,
)
from tests.conftest import REFERENCE_30_7, REFERENCE_50_12, REFERENCE_COLUMN_100_25


class TestSimulateNullZ:
    def test_deterministic_per_seed(self):
        a = simulate_null_z(30, 7, 5000, seed=3)
        b = simulate_null_z(30, 7, 5000, seed=3)
        assert np.array_equal(a, b)

    def test_chunking_invisible_in_prefix(self):
        # The first n samples of a longer run equal the shorter run exactly,
        # which is what makes deterministic sharding possible.
        short = simulate_null_z(30, 7, 10000, seed=3)
        long = simulate_null_z(30, 7, 20000, seed=3)
        assert np.array_equal(short, long[:10000])

    def test_parameter_validation(self):
        with pytest.raises(StreamError):
            simulate_null_z(30, 15, 100, seed=0)
        with pytest.raises(StreamError):
            simulate_null_z(30, 7, 0, seed=0)


class TestQuantileTable:
    def test_nearest_rank_95(self):
        entries = dict(quantile_table(np.arange(1, 101), [0.05]))
        assert entries[0.05] == 95

    def test_nearest_rank_median(self):
        entries = dict(quantile_table(np.arange(1, 101), [0.5]))
        assert entries[0.5] == 50

    def test_insufficient_simulations(self):
        with pytest.raises(StreamError, match="insufficient simulations"):
            quantile_table(np.arange(1, 101), [0.001])


class TestFitThreshold:
    def test_two_points_define_line(self):
        slope, intercept = fit_threshold([(0.1, 10.0), (0.01, 20.0)])
        assert slope == pytest.approx(10.0)
        assert intercept == pytest.approx(0.0, abs=1e-9)

    def test_flat_entries(self):
        slope, intercept = fit_threshold([(0.1, 5.0), (0.01, 5.0)])
        assert slope == pytest.approx(0.0, abs=1e-12)
        assert intercept == pytest.approx(5.0)

    def test_reference_column_residuals(self):
        entries = sorted(REFERENCE_COLUMN_100_25.items(), reverse=True)
        slope, intercept = fit_threshold(entries)
        resid = [abs(h - (intercept + slope * np.log10(1 / d))) for d, h in entries]
        assert max(resid) <= 0.6

    def test_needs_two_entries(self):
        with pytest.raises(StreamError):
            fit_threshold([(0.1, 10.0)])


class TestThresholdFor:
    @pytest.fixture()
    def reference_table(self):
        entries = tuple(sorted(REFERENCE_COLUMN_100_25.items(), reverse=True))
        return CalibrationTable(
            T=100, alpha=25, entries=entries, fit=fit_threshold(entries), n_sims=0, seed=0
        )

    def test_exact_entry_lookup(self, reference_table):
        assert threshold_for(reference_table, 0.001) == 19.578

    def test_between_entries_uses_line_bracketed_by_neighbors(self, reference_table):
        h = threshold_for(reference_table, 0.003)
        assert 14.332 - 0.6 <= h <= 19.578 + 0.6

    def test_extrapolation_below_range_is_monotone(self, reference_table):
        assert threshold_for(reference_table, 1e-9) > 34.720

    def test_delta_validation(self, reference_table):
        with pytest.raises(StreamError):
            threshold_for(reference_table, 0.0)


class TestAgainstReferenceQuantiles:
    def test_t100_alpha25(self, table_100_25):
        got = dict(table_100_25.entries)
        assert got[0.1] == pytest.approx(REFERENCE_COLUMN_100_25[0.1], abs=0.10)
        assert got[0.05] == pytest.approx(REFERENCE_COLUMN_100_25[0.05], abs=0.10)
        assert got[0.01] == pytest.approx(REFERENCE_COLUMN_100_25[0.01], abs=0.15)
        assert got[0.001] == pytest.approx(REFERENCE_COLUMN_100_25[0.001], abs=0.30)

    def test_t50_alpha12(self, table_50_12):
        got = dict(table_50_12.entries)
        assert got[0.1] == pytest.approx(REFERENCE_50_12[0.1], abs=0.10)
        assert got[0.001] == pytest.approx(REFERENCE_50_12[0.001], abs=0.30)

    def test_t30_alpha7(self, table_30_7):
        got = dict(table_30_7.entries)
        assert got[0.01] == pytest.approx(REFERENCE_30_7[0.01], abs=0.15)
        assert got[0.001] == pytest.approx(REFERENCE_30_7[0.001], abs=0.30)


class TestTableInvariants:
    def test_monotone_thresholds(self, table_100_25, table_50_12, table_30_7):
        for table in (table_100_25, table_50_12, table_30_7):
            hs = [h for _, h in table.entries]
            assert all(hs[i] < hs[i + 1] for i in range(len(hs) - 1))

    def test_cross_alpha_monotonicity_at_fixed_window(self):
        deltas = (0.1, 0.05, 0.01)
        tables = {a: build_table(50, a, 200_000, seed=29, deltas=deltas) for a in (5, 10, 12)}
        for d in deltas:
            hs = [dict(tables[a].entries)[d] for a in (5, 10, 12)]
            assert hs[0] > hs[1] > hs[2]

    def test_serialization_round_trip_is_byte_identical(self, tmp_path, table_30_7):
        p1 = tmp_path / "a.json"
        p2 = tmp_path / "b.json"
        save_table(table_30_7, p1)
        save_table(load_table(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()
        doc = json.loads(p1.read_text())
        assert set(doc) == {"T", "alpha", "n_sims", "seed", "rng_name", "entries", "fit"}
        assert set(doc["fit"]) == {"slope", "intercept"}
        assert all(set(e) == {"delta", "h"} for e in doc["entries"])

    def test_rebuild_reproduces_table(self, table_30_7):
        again = build_table(30, 7, 1_000_000, seed=17)
        assert again == table_30_7

    def test_validation_rejects_disordered_entries(self):
        with pytest.raises(StreamError):
            CalibrationTable(
                T=30, alpha=7, entries=((0.01, 5.0), (0.1, 4.0)), fit=(1.0, 1.0), n_sims=1, seed=0
            )
        with pytest.raises(StreamError):
            CalibrationTable(
                T=30, alpha=7, entries=((0.1, 5.0), (0.01, 5.0)), fit=(1.0, 1.0), n_sims=1, seed=0
            )


def test_convergence_across_seeds():
    # The one-million-sample estimate at delta=0.01 stays within 0.15 of the
    # reference value in at least 9 of 10 independent seeds.
    hits = 0
    for seed in range(10):
        samples = simulate_null_z(100, 25, 1_000_000, seed=1000 + seed)
        h = dict(quantile_table(samples, [0.01]))[0.01]
        hits += abs(h - REFERENCE_COLUMN_100_25[0.01]) <= 0.15
    assert hits >= 9
