"""Tilted targets: limits, tilting algebra, loss, and the optimality oracle."""

import itertools
import math

import numpy as np
import pytest

from routerlab.errors import NoCorrectModelError, UnsupportedArityError
from routerlab.soft_label import (
    SoftTarget,
    build_targets,
    expected_cost,
    grid_argmin,
    soft_loss,
    soft_target,
    tilt_objective,
    verify_optimality,
)

LAMBDA_GRID = (0.0, 10.0, 100.0, 1000.0, 10000.0, math.inf)


def random_row(rng, m=5, min_correct=1, max_correct=None):
    k = int(rng.integers(min_correct, (max_correct or m) + 1))
    y = np.zeros(m, dtype=np.uint8)
    y[rng.choice(m, size=k, replace=False)] = 1
    return y, rng.uniform(1e-4, 2e-2, size=m)


class TestSoftTarget:
    def test_lambda_zero_uniform(self):
        t = soft_target(np.array([1, 1, 0]), np.array([0.9, 0.1, 0.5]), 0.0)
        np.testing.assert_array_equal(t.probs, [0.5, 0.5, 0.0])

    def test_lambda_inf_cheapest(self):
        t = soft_target(np.array([1, 1, 0]), np.array([0.2, 0.1, 0.05]), math.inf)
        np.testing.assert_array_equal(t.probs, [0.0, 1.0, 0.0])

    def test_lambda_inf_tie_uniform_over_cheapest(self):
        t = soft_target(np.array([1, 1, 1, 0]), np.array([0.1, 0.1, 0.3, 0.0]), math.inf)
        np.testing.assert_array_equal(t.probs, [0.5, 0.5, 0.0, 0.0])

    def test_tilted_example(self):
        # weights e^0 and e^-1 after the min-shift: 1/(1+e^-1), e^-1/(1+e^-1)
        t = soft_target(np.array([1, 1, 0]), np.array([0.1, 0.2, 0.0]), 10.0)
        np.testing.assert_allclose(t.probs, [0.7311, 0.2689, 0.0], atol=1e-4)

    def test_no_correct_model(self):
        with pytest.raises(NoCorrectModelError):
            soft_target(np.zeros(3), np.ones(3), 1.0)

    def test_bad_lambda(self):
        with pytest.raises(ValueError):
            soft_target(np.array([1, 0]), np.array([1.0, 2.0]), -1.0)
        with pytest.raises(ValueError):
            soft_target(np.array([1, 0]), np.array([1.0, 2.0]), math.nan)

    def test_normalization_and_support(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            y, c = random_row(rng)
            for lam in LAMBDA_GRID:
                t = soft_target(y, c, lam)
                assert abs(t.probs.sum() - 1.0) <= 1e-9
                assert np.all(t.probs[y == 0] == 0.0)
                assert np.all(t.probs >= 0.0)

    def test_underflow_safe_at_huge_lambda(self):
        t = soft_target(np.array([1, 1]), np.array([1.0, 2.0]), 1e4)
        assert np.isfinite(t.probs).all() and t.probs[0] == pytest.approx(1.0)

    def test_scale_tilt_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            y, c = random_row(rng)
            s = float(rng.uniform(0.01, 100.0))
            lam = float(rng.uniform(0.0, 1000.0))
            a = soft_target(y, s * c, lam).probs
            b = soft_target(y, c, s * lam).probs
            np.testing.assert_allclose(a, b, atol=1e-9)

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            y, c = random_row(rng)
            delta = float(rng.uniform(-0.5, 0.5))
            a = soft_target(y, c + delta, 37.0).probs
            b = soft_target(y, c, 37.0).probs
            np.testing.assert_allclose(a, b, atol=1e-9)

    def test_build_targets_marks_dead_rows(self):
        y = np.array([[1, 0], [0, 0], [1, 1]], dtype=np.uint8)
        c = np.full((3, 2), 0.01)
        t, valid = build_targets(y, c, 0.0)
        np.testing.assert_array_equal(valid, [True, False, True])
        np.testing.assert_array_equal(t[1], [0.0, 0.0])
        np.testing.assert_allclose(t[2], [0.5, 0.5])


class TestExpectedCost:
    def test_one_hot(self):
        t = SoftTarget(np.array([0.0, 1.0, 0.0]), math.inf)
        assert expected_cost(t, np.array([0.5, 0.25, 0.125])) == 0.25

    def test_uniform_mean(self):
        t = soft_target(np.array([1, 1, 0]), np.array([0.1, 0.3, 9.0]), 0.0)
        assert expected_cost(t, np.array([0.1, 0.3, 9.0])) == pytest.approx(0.2)

    def test_monotone_in_lambda(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            y, c = random_row(rng)
            costs = [expected_cost(soft_target(y, c, lam), c)
                     for lam in (0.0, 1.0, 10.0, 100.0)]
            for a, b in zip(costs, costs[1:]):
                assert b <= a + 1e-12


class TestSoftLoss:
    def test_exact_match_one_hot(self):
        t = SoftTarget(np.array([0.0, 1.0]), math.inf)
        assert soft_loss(np.array([0.0, 1.0]), t) == 0.0

    def test_log_two_example(self):
        t = SoftTarget(np.array([0.5, 0.5, 0.0]), 0.0)
        eps = 1e-9
        pred = np.array([0.5, 0.5, eps])
        pred = pred / pred.sum()
        assert soft_loss(pred, t) == pytest.approx(math.log(2), abs=1e-6)

    def test_gibbs_inequality(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            y, c = random_row(rng)
            t = soft_target(y, c, float(rng.uniform(0, 100)))
            pred = rng.dirichlet(np.ones(y.size))
            entropy = -np.sum(t.probs[t.probs > 0] * np.log(t.probs[t.probs > 0]))
            assert soft_loss(pred, t) >= entropy - 1e-12


def enumerate_simplex_argmin(lam_costs, tau, step):
    """Independent oracle: full enumeration of the simplex lattice."""
    units = int(round(1.0 / step))
    best_q, best_v = None, math.inf
    for combo in itertools.product(range(units + 1), repeat=lam_costs.size - 1):
        rem = units - sum(combo)
        if rem < 0:
            continue
        q = np.array(list(combo) + [rem], dtype=np.float64) / units
        v = float(tilt_objective(q, lam_costs, tau)[0])
        if v < best_v:
            best_v, best_q = v, q
    return best_q, best_v


class TestOptimalityOracle:
    def test_grid_argmin_matches_enumeration(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            arity = int(rng.integers(2, 5))
            lam_costs = rng.uniform(0.0, 2.0, size=arity)
            tau = float(rng.uniform(0.3, 2.0))
            step = 0.05 if arity == 4 else 0.02
            got = grid_argmin(lam_costs, tau, step)
            _, best_v = enumerate_simplex_argmin(lam_costs, tau, step)
            got_v = float(tilt_objective(got, lam_costs, tau)[0])
            assert got_v == pytest.approx(best_v, abs=1e-12)

    def test_lambda_zero_two_models(self):
        d = verify_optimality(np.array([1, 1, 0]), np.array([0.1, 0.2, 0.3]),
                              0.0, 1.0, 1e-3)
        assert d <= 1e-3

    def test_random_rows_within_tolerance(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            y, c = random_row(rng, m=6, min_correct=2, max_correct=4)
            lam = float(rng.choice([0.0, 1.0, 10.0, 100.0]))
            assert verify_optimality(y, c, lam, 1.0, 1e-3) <= 2e-3

    def test_temperature_identity(self):
        # the closed form at (lam=5, tau=0.5) is the lam=10 target
        y = np.array([1, 1, 1, 0])
        c = np.array([0.003, 0.011, 0.007, 0.5])
        assert verify_optimality(y, c, 5.0, 0.5, 1e-3) <= 2e-3
        a = soft_target(y, c, 5.0 / 0.5).probs
        b = soft_target(y, c, 10.0).probs
        np.testing.assert_array_equal(a, b)

    def test_unsupported_arity(self):
        with pytest.raises(UnsupportedArityError):
            verify_optimality(np.ones(5), np.ones(5) * 0.01, 1.0, 1.0, 1e-2)
        with pytest.raises(UnsupportedArityError):
            verify_optimality(np.array([1, 0, 0]), np.ones(3) * 0.01, 1.0, 1.0, 1e-2)

    def test_no_correct_model(self):
        with pytest.raises(NoCorrectModelError):
            verify_optimality(np.zeros(3), np.ones(3), 1.0, 1.0, 1e-2)

    def test_infinite_lambda_rejected(self):
        with pytest.raises(ValueError):
            verify_optimality(np.array([1, 1]), np.array([0.1, 0.2]),
                              math.inf, 1.0, 1e-2)
