import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexknn.distances import LpNorm
from flexknn.errors import InvalidParameter, NonFiniteObjective, TooSmall
from flexknn.knn import make_dataset
from flexknn.optimize import (
    Anneal,
    NelderMead,
    grid_search_k,
    k_validation_accuracy,
    minimize,
    nelder_mead,
    parse_optimizer,
    simulated_annealing,
)


def rosenbrock(x):
    return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2


def double_well(x):
    return (x[0] ** 2 - 1) ** 2 + 0.3 * x[0]


def grid_minimum(f, lo, hi, n=2_000_001):
    xs = np.linspace(lo, hi, n)
    fs = (xs**2 - 1) ** 2 + 0.3 * xs if f is double_well else np.array([f([x]) for x in xs])
    i = int(np.argmin(fs))
    return xs[i], fs[i]


class TestNelderMead:
    def test_parabola(self):
        r = nelder_mead(lambda x: (x[0] - 2) ** 2, [10.0])
        assert abs(r.x_best[0] - 2) < 1e-6
        assert r.converged

    def test_rosenbrock(self):
        r = nelder_mead(rosenbrock, [-1.2, 1.0], NelderMead(max_iter=5000))
        assert np.linalg.norm(r.x_best - 1) < 1e-4
        assert r.iterations <= 5000

    def test_constant(self):
        r = nelder_mead(lambda x: 3.0, [1.0, 2.0])
        assert r.converged and r.iterations == 0
        assert r.f_best == 3.0

    def test_nan_at_start(self):
        with pytest.raises(NonFiniteObjective):
            nelder_mead(lambda x: float("nan"), [0.0])

    def test_nan_elsewhere_treated_as_worse(self):
        r = nelder_mead(lambda x: (x[0] - 1) ** 2 if x[0] < 3 else float("nan"), [2.5])
        assert abs(r.x_best[0] - 1) < 1e-5

    def test_budget(self):
        calls = []
        r = nelder_mead(lambda x: calls.append(1) or (x[0] - 5) ** 2, [0.0], max_evals=7)
        assert len(calls) == r.evaluations == 7

    def test_budget_one_returns_start(self):
        r = nelder_mead(lambda x: (x[0] - 5) ** 2, [0.0], max_evals=1)
        assert r.x_best[0] == 0.0 and r.f_best == 25.0

    def test_f_best_is_f_of_x_best(self):
        r = nelder_mead(rosenbrock, [0.0, 0.0], NelderMead(max_iter=50))
        assert r.f_best == rosenbrock(r.x_best)

    def test_deterministic(self):
        a = nelder_mead(rosenbrock, [-1.2, 1.0])
        b = nelder_mead(rosenbrock, [-1.2, 1.0])
        np.testing.assert_array_equal(a.x_best, b.x_best)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=4), st.integers(1, 200))
    @settings(max_examples=40)
    def test_never_worse_than_start(self, x0, budget):
        f = lambda x: float(np.sum(np.sin(3 * x) + 0.1 * x**2))
        r = nelder_mead(f, x0, max_evals=budget)
        assert r.f_best <= f(np.array(x0))
        assert r.x_best.shape == (len(x0),)

    def test_rejects_bad_coefficients(self):
        with pytest.raises(InvalidParameter):
            NelderMead(contract=0)
        with pytest.raises(InvalidParameter):
            NelderMead(tol=0)


class TestAnnealing:
    def test_parabola(self):
        r = simulated_annealing(lambda x: x[0] ** 2, [5.0])
        assert r.f_best < 1e-2

    def test_double_well_global(self):
        x_star, f_star = grid_minimum(double_well, -2, 2)
        assert x_star < 0
        r = simulated_annealing(double_well, [0.9], Anneal(seed=0))
        assert abs(r.f_best - f_star) < 1e-2

    def test_greedy_at_zero_temperature(self):
        r = simulated_annealing(double_well, [0.9], Anneal(t0=0.0, seed=1, max_evals=2000))
        assert r.accepted_worse == 0

    def test_deterministic_per_seed(self):
        a = simulated_annealing(rosenbrock, [0.0, 0.0], Anneal(seed=4, max_evals=500))
        b = simulated_annealing(rosenbrock, [0.0, 0.0], Anneal(seed=4, max_evals=500))
        np.testing.assert_array_equal(a.x_best, b.x_best)

    def test_nan_at_start(self):
        with pytest.raises(NonFiniteObjective):
            simulated_annealing(lambda x: float("nan"), [0.0])

    @given(st.floats(-20, 20), st.integers(0, 1000))
    @settings(max_examples=30)
    def test_never_worse_than_start(self, x0, seed):
        r = simulated_annealing(double_well, [x0], Anneal(seed=seed, max_evals=300))
        assert r.f_best <= double_well([x0])

    def test_rejects_bad_schedule(self):
        with pytest.raises(InvalidParameter):
            Anneal(cooling=1.0)


class TestParsing:
    def test_nm(self):
        assert parse_optimizer("nm,tol=1e-8,iters=2000") == NelderMead(tol=1e-8, max_iter=2000)

    def test_sa(self):
        want = Anneal(t0=1.0, cooling=0.95, steps_per_temp=50, step_scale=0.5, seed=7)
        assert parse_optimizer("sa,t0=1.0,cool=0.95,steps=50,scale=0.5,seed=7") == want

    @pytest.mark.parametrize("text", ["bfgs", "nm,tol", "nm,foo=1", "sa,cool=2"])
    def test_rejects(self, text):
        with pytest.raises(InvalidParameter):
            parse_optimizer(text)

    def test_minimize_dispatch(self):
        r = minimize(lambda x: (x[0] - 1) ** 2, [0.0], parse_optimizer("nm"))
        assert abs(r.x_best[0] - 1) < 1e-6


def two_clusters(seed, n=80):
    """Two tight clusters far apart; 1-NN is perfect, large k mixes in the
    other cluster because it is smaller."""
    rng = np.random.default_rng(seed)
    a = rng.normal(0, 0.01, size=(n, 2))
    b = rng.normal(0, 0.01, size=(n // 8, 2)) + 10
    x = np.vstack([a, b])
    y = np.array([0] * n + [1] * (n // 8))
    return make_dataset(x, y, seed=seed)


class TestGridSearchK:
    def test_one_nn_perfect(self):
        ds = two_clusters(0)
        acc = k_validation_accuracy(ds, LpNorm(2), 30)
        # oracle: cluster b has 10 points, about 7 land in the fitting part;
        # any k above that misvotes every validation point from b
        assert acc[0] == 1.0
        assert acc[29] < 1.0
        assert grid_search_k(ds, LpNorm(2), 30) == 1

    def test_k_max_one(self):
        assert grid_search_k(two_clusters(1), LpNorm(2), 1) == 1

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        ds = make_dataset(rng.normal(size=(60, 2)), rng.integers(0, 2, size=60), seed=3)
        assert grid_search_k(ds, LpNorm(2), 20, seed=5) == grid_search_k(ds, LpNorm(2), 20, seed=5)

    def test_folds(self):
        ds = two_clusters(2)
        acc = k_validation_accuracy(ds, LpNorm(2), 5, folds=4)
        assert acc[0] == 1.0

    def test_validation_accuracy_oracle(self):
        # recompute the 75/25 split accuracy for k = 3 by hand
        rng = np.random.default_rng(9)
        ds = make_dataset(rng.normal(size=(40, 2)), rng.integers(0, 2, size=40), seed=9)
        acc = k_validation_accuracy(ds, LpNorm(2), 3, seed=4)
        perm = np.random.default_rng(4).permutation(40)
        val, fit = perm[:10], perm[10:]
        correct = 0
        for i in val:
            d = [(math.dist(ds.features[i], ds.features[j]), -ds.tiebreak[j], j) for j in fit]
            votes = [ds.labels[j] for _, _, j in sorted(d)[:3]]
            correct += int((2 * sum(votes) >= 3) == ds.labels[i])
        assert acc[2] == correct / 10

    def test_too_small(self):
        ds = make_dataset(np.zeros((1, 1)), [0])
        with pytest.raises(TooSmall):
            grid_search_k(ds, LpNorm(2), 3)
