"""Evaluation protocol: means, normalization, Rank Score, throughput."""

import math

import numpy as np
import pytest

from routerlab.baselines import cheapest_model, oracle_decisions
from routerlab.errors import DecisionCountMismatchError, ZeroDurationError
from routerlab.log_store import BenchStore, Sample, SplitAssignment, make_split
from routerlab.metrics import (
    DISPLAY_SCALE,
    build_report,
    cost_norm,
    cost_range,
    evaluate,
    leaderboard_rows,
    rank_score,
    throughput,
)


def toy_store(rng, n=10, m=3, datasets=("d0", "d1")):
    samples = [Sample(datasets[i % len(datasets)], i, "x", "p") for i in range(n)]
    y = (rng.random((n, m)) < 0.5).astype(np.uint8)
    c = rng.uniform(1e-4, 1e-2, (n, m))
    return BenchStore(samples, [f"m{j}" for j in range(m)], y, c)


def all_test_split(n, seed=0):
    return SplitAssignment(np.full(n, 2, dtype=np.int8), seed)


class TestEvaluate:
    def test_all_correct_is_hundred(self):
        rng = np.random.default_rng(0)
        store = toy_store(rng)
        store = BenchStore(store.samples, store.models,
                           np.ones_like(store.y), store.c)
        split = all_test_split(10)
        acc, _ = evaluate(np.zeros(10, dtype=np.int64), store, split)
        assert acc == 100.0

    def test_oracle_full_coverage_is_hundred(self):
        rng = np.random.default_rng(1)
        store = toy_store(rng)
        y = store.y.copy()
        y[y.sum(axis=1) == 0, 0] = 1
        store = BenchStore(store.samples, store.models, y, store.c)
        split = all_test_split(10)
        dec = oracle_decisions(store.y, store.c)
        acc, _ = evaluate(dec, store, split)
        assert acc == 100.0

    def test_matches_hand_computation(self):
        rng = np.random.default_rng(2)
        store = toy_store(rng, n=10, m=3)
        split = all_test_split(10)
        dec = rng.integers(0, 3, size=10)
        acc, cost = evaluate(dec, store, split)
        expect_acc = 100.0 * sum(store.y[i, dec[i]] for i in range(10)) / 10
        expect_cost = sum(store.c[i, dec[i]] for i in range(10)) / 10
        assert acc == pytest.approx(expect_acc)
        assert cost == pytest.approx(expect_cost)

    def test_count_mismatch(self):
        rng = np.random.default_rng(3)
        store = toy_store(rng)
        with pytest.raises(DecisionCountMismatchError):
            evaluate(np.zeros(7, dtype=np.int64), store, all_test_split(10))


class TestCostNorm:
    def test_boundaries(self):
        assert cost_norm(1.0, 1.0, 16.0) == 100.0
        assert cost_norm(16.0, 1.0, 16.0) == 0.0

    def test_geometric_midpoint(self):
        c_min, c_max = 0.37, 21.0
        mid = math.sqrt(c_min * c_max)
        assert cost_norm(mid, c_min, c_max) == pytest.approx(50.0, abs=1e-9)

    def test_clamped(self):
        assert cost_norm(0.5, 1.0, 16.0) == 100.0
        assert cost_norm(32.0, 1.0, 16.0) == 0.0

    def test_degenerate_range_convention(self):
        assert cost_norm(5.0, 2.0, 2.0) == 100.0

    def test_unit_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            c_min = float(rng.uniform(0.01, 1.0))
            c_max = c_min * float(rng.uniform(1.5, 50.0))
            cost = float(rng.uniform(c_min, c_max))
            base = cost_norm(cost, c_min, c_max)
            for s in (0.01, 100.0):
                assert cost_norm(cost * s, c_min * s, c_max * s) == pytest.approx(
                    base, abs=1e-9)

    def test_positivity_required(self):
        with pytest.raises(ValueError):
            cost_norm(0.0, 1.0, 2.0)


class TestRankScore:
    def test_equal_inputs_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            a = float(rng.uniform(0.5, 100.0))
            beta = float(rng.uniform(0.01, 10.0))
            assert rank_score(a, a, beta) == pytest.approx(a, abs=1e-9)

    def test_published_row(self):
        assert rank_score(62.43, 100.0, 0.1) == pytest.approx(64.63, abs=0.05)

    def test_derived_example(self):
        assert rank_score(80.0, 50.0, 0.1) == pytest.approx(75.86, abs=0.005)

    def test_zero_denominator(self):
        assert rank_score(0.0, 0.0, 0.1) == 0.0

    def test_strictly_increasing(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            a = float(rng.uniform(1.0, 99.0))
            c = float(rng.uniform(1.0, 99.0))
            assert rank_score(a + 0.5, c) > rank_score(a, c)
            assert rank_score(a, c + 0.5) > rank_score(a, c)


class TestThroughput:
    def test_arithmetic(self):
        assert throughput(1_000_000, 10.0) == 100.0

    def test_zero_duration(self):
        with pytest.raises(ZeroDurationError):
            throughput(100, 0.0)


class TestCostRange:
    def test_column_means(self):
        samples = [Sample("d", i, "x", "p") for i in range(4)]
        c = np.array([[0.1, 0.5]] * 4)
        store = BenchStore(samples, ["a", "b"], np.ones((4, 2), np.uint8), c)
        lo, hi = cost_range(store, all_test_split(4))
        assert lo == pytest.approx(0.1 * DISPLAY_SCALE)
        assert hi == pytest.approx(0.5 * DISPLAY_SCALE)

    def test_dominated_mid_model_irrelevant(self):
        samples = [Sample("d", i, "x", "p") for i in range(4)]
        c2 = np.array([[0.1, 0.5]] * 4)
        c3 = np.array([[0.1, 0.3, 0.5]] * 4)
        s2 = BenchStore(samples, ["a", "b"], np.ones((4, 2), np.uint8), c2)
        s3 = BenchStore(samples, ["a", "b", "c"], np.ones((4, 3), np.uint8), c3)
        assert cost_range(s2, all_test_split(4)) == cost_range(s3, all_test_split(4))

    def test_cheapest_policy_pins_cost_norm_at_100(self):
        # prices far enough apart that the train-cheapest model is also the
        # test-cheapest, so the always-cheapest policy sits exactly at c_min
        rng = np.random.default_rng(7)
        n = 200
        samples = [Sample("d", i, "x", "p") for i in range(n)]
        base = np.array([1e-4, 1e-3, 1e-2])
        c = base[None, :] * rng.uniform(0.8, 1.2, size=(n, 3))
        y = (rng.random((n, 3)) < 0.5).astype(np.uint8)
        store = BenchStore(samples, ["a", "b", "c"], y, c)
        split = make_split(store, seed=0)
        pick = cheapest_model(store.c[split.train_idx], store.y[split.train_idx])
        dec = np.full(split.test_idx.size, pick.model_index)
        report = build_report("cheapest", dec, store, split)
        assert report.cost_norm == pytest.approx(100.0)


class TestReport:
    def test_per_dataset_recomposes(self):
        rng = np.random.default_rng(8)
        store = toy_store(rng, n=60, m=3, datasets=("a", "b", "c"))
        split = make_split(store, seed=1)
        dec = rng.integers(0, 3, size=split.test_idx.size)
        report = build_report("r", dec, store, split)
        total = sum(store.dataset_rows(ds).size for ds in report.per_dataset)
        weighted = 0.0
        for ds, (acc, _) in report.per_dataset.items():
            rows = [i for i in split.test_idx
                    if store.samples[i].dataset == ds]
            weighted += acc * len(rows)
        assert weighted / split.test_idx.size == pytest.approx(report.avg_acc, abs=1e-9)

    def test_display_transform(self):
        rng = np.random.default_rng(9)
        store = toy_store(rng)
        split = all_test_split(10)
        report = build_report("r", np.zeros(10, dtype=np.int64), store, split)
        assert report.avg_cost_display == pytest.approx(
            report.avg_cost_per_sample * 1e4)

    def test_rank_score_bounded_by_inputs(self):
        rng = np.random.default_rng(10)
        store = toy_store(rng, n=40)
        split = make_split(store, seed=2)
        dec = rng.integers(0, 3, size=split.test_idx.size)
        r = build_report("r", dec, store, split)
        lo, hi = sorted([r.avg_acc, r.cost_norm])
        assert lo - 1e-9 <= r.rank_score <= hi + 1e-9


class TestLeaderboard:
    def _report(self, name, rank_score_value, cost):
        rng = np.random.default_rng(11)
        store = toy_store(rng)
        split = all_test_split(10)
        r = build_report(name, np.zeros(10, dtype=np.int64), store, split)
        r.rank_score = rank_score_value
        r.avg_cost_per_sample = cost
        return r

    def test_sorted_by_rank_score_then_cost(self):
        reports = [self._report("a", 50.0, 2.0), self._report("b", 70.0, 1.0),
                   self._report("c", 50.0, 1.0)]
        rows = leaderboard_rows(reports)
        assert [r["router"] for r in rows] == ["b", "c", "a"]
        assert [r["rank"] for r in rows] == [1, 2, 3]
