import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexknn.audit import check_norm_axioms, estimate_family_bounds
from flexknn.distances import CoordinateFunction, LpNorm, MatrixThenInner, diagonal, evaluate
from flexknn.errors import DegenerateVariance, EmptySelectSet, InvalidParameter, TooSmall
from flexknn.knn import make_dataset, predict, predict_binary, rank
from flexknn.linalg import singular_values
from flexknn.metric_learning import (
    LocalMetricQuery,
    MatrixLp,
    MatrixPolynomial,
    SplitSample,
    choose_local_k,
    label_agreement_correlation,
    local_objective,
    parse_family,
    pearson,
    predict_local,
    predict_local_detailed,
    realize,
    select_local_distance,
    select_local_distance_detailed,
    shared_sample,
    split_sample,
)
from flexknn.optimize import Anneal, NelderMead
from oracles import pearson_naive

IDENTITY_L2 = MatrixLp(entry_bounds=(1.0, 1.0), p_range=(2.0, 2.0))


def axis_data(n, seed, noise=5.0):
    """Labels from the sign of coordinate 1; coordinate 2 is wide noise."""
    rng = np.random.default_rng(seed)
    x = np.column_stack([rng.uniform(-1, 1, n), rng.uniform(-noise, noise, n)])
    return make_dataset(x, (x[:, 0] > 0).astype(int), seed=seed)


class TestPearson:
    def test_hand_example(self):
        assert pearson([1, 2, 3], [1, 1, 0]) == pytest.approx(-math.sqrt(3) / 2, abs=1e-15)

    def test_perfect_line(self):
        assert pearson([1, 2, 3, 4], [2, 4, 6, 8]) == pytest.approx(1.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateVariance):
            pearson([1, 2, 3], [1, 1, 1])
        with pytest.raises(DegenerateVariance):
            pearson([2, 2, 2], [0, 1, 1])

    @given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=30))
    def test_in_range_and_matches_naive(self, pairs):
        x, y = map(np.array, zip(*pairs))
        try:
            r = pearson(x, y)
        except DegenerateVariance:
            return
        assert -1.0 <= r <= 1.0
        if np.std(x) > 1e-6 * (1 + np.abs(x).max()) and np.std(y) > 1e-6 * (1 + np.abs(y).max()):
            raw = pearson_naive(list(x), list(y))
            assert abs(raw) <= 1 + 1e-9
            assert r == pytest.approx(max(-1.0, min(1.0, raw)), abs=1e-9)


class TestCorrelation:
    def test_agreement_correlation(self):
        # query at 0 with label 1; neighbours at distances 1, 2, 3 with labels 1, 1, 0
        ds = make_dataset(np.array([[0.0], [1.0], [2.0], [3.0]]), [1, 1, 1, 0])
        r = label_agreement_correlation(ds, 0, [1, 2, 3], LpNorm(2))
        assert r == pytest.approx(-math.sqrt(3) / 2)

    def test_all_agree(self):
        ds = make_dataset(np.array([[0.0], [1.0], [2.0]]), [1, 1, 1])
        with pytest.raises(DegenerateVariance):
            label_agreement_correlation(ds, 0, [1, 2], LpNorm(2))

    def test_preconditions(self):
        ds = make_dataset(np.array([[0.0], [1.0], [2.0]]), [1, 0, 1])
        with pytest.raises(InvalidParameter):
            label_agreement_correlation(ds, 0, [0, 1], LpNorm(2))
        with pytest.raises(InvalidParameter):
            label_agreement_correlation(ds, 0, [1], LpNorm(2))


class TestObjective:
    def test_scaling_informative_axis_lowers_objective(self):
        ds = axis_data(300, 0)
        q = LocalMetricQuery(family=MatrixLp(p_range=(2, 2)))
        query = np.array([0.0, 0.0])
        ident = local_objective(ds, query, q.family.identity(2), q)
        scaled = local_objective(ds, query, np.log([10.0, 1.0, 2.0]), q)
        assert scaled < ident
        # grid oracle over diagonal entries: the best point weights axis 1 more
        grid = np.log(np.geomspace(0.1, 10, 20))
        vals = [(local_objective(ds, query, np.array([a, b, np.log(2)]), q), a, b) for a in grid for b in grid]
        _, a, b = min(vals)
        assert a > b

    def test_noise_near_zero(self):
        rng = np.random.default_rng(1)
        ds = make_dataset(rng.normal(size=(400, 2)), rng.integers(0, 2, size=400), seed=1)
        q = LocalMetricQuery(k1=10, k2=50)
        v = local_objective(ds, np.zeros(2), q.family.identity(2), q)
        assert abs(v) < 0.15

    def test_single_training_query_is_single_correlation(self):
        ds = axis_data(60, 2)
        q = LocalMetricQuery(k1=1, k2=8, family=IDENTITY_L2)
        query = np.array([0.1, 0.3])
        idx = rank(evaluate(LpNorm(2), ds.features - query), ds.tiebreak, 8)
        want = label_agreement_correlation(ds, idx[0], idx[1:], LpNorm(2))
        assert local_objective(ds, query, IDENTITY_L2.identity(2), q) == pytest.approx(want, abs=1e-12)

    def test_degenerate_neighbourhood_scores_zero(self):
        ds = make_dataset(np.random.default_rng(0).normal(size=(30, 2)), np.ones(30, dtype=int))
        q = LocalMetricQuery(k1=5, k2=20)
        assert local_objective(ds, np.zeros(2), q.family.identity(2), q) == 0.0

    @given(st.integers(0, 1000))
    @settings(max_examples=20, deadline=None)
    def test_relabel_invariant(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(80, 3))
        y = rng.integers(0, 2, size=80)
        a = make_dataset(x, y, seed=seed)
        b = make_dataset(x, 1 - y, tiebreak=a.tiebreak)
        q = LocalMetricQuery(k1=5, k2=30)
        theta = rng.normal(size=4) * 0.5
        assert local_objective(a, x[0], theta, q) == local_objective(b, x[0], theta, q)


class TestFamilies:
    def test_identity_point(self):
        spec = realize(MatrixLp(), MatrixLp().identity(3), 3)
        assert spec == diagonal([1, 1, 1], LpNorm(2))

    def test_diagonal_box(self):
        fam = MatrixLp(entry_bounds=(0.5, 2), p_range=(1, 3))
        spec = realize(fam, np.array([5.0, -5.0, 10.0]), 2)
        np.testing.assert_allclose(np.diag(spec.array), [2.0, 0.5])
        assert spec.inner.p == pytest.approx(3.0)

    def test_full_projection_clamps_singular_values(self):
        fam = MatrixLp(shape="full")
        rng = np.random.default_rng(0)
        theta = np.append(rng.normal(size=9) * 30, 0.0)
        sv = singular_values(realize(fam, theta, 3).array)
        assert 0.1 - 1e-9 <= sv.min and sv.max <= 10 + 1e-9

    @given(st.integers(0, 1000))
    @settings(max_examples=15, deadline=None)
    def test_realized_lp_are_norms(self, seed):
        rng = np.random.default_rng(seed)
        fam = MatrixLp(shape=["diagonal", "full"][seed % 2], p_range=(1.0, 4.0))
        d = 3
        theta = fam.project(fam.identity(d) + rng.normal(size=fam.identity(d).size), d)
        spec = realize(fam, theta, d)
        assert check_norm_axioms(spec, d, trials=300, seed=seed).triangle_ok

    def test_polynomial_family_bounds(self):
        fam = MatrixPolynomial(degree=5)
        theta = fam.project(np.array([0.3, -0.2, 1.0, 0.5, 0.0, 2.0, 0.1]), 2)
        spec = realize(fam, theta, 2)
        assert isinstance(spec.inner, CoordinateFunction)
        assert spec.inner.coeffs[0] >= fam.beta
        assert not estimate_family_bounds(spec, r=1.0, grid=20, ref_p=1.0).violated

    def test_fast_path_matches_realized(self):
        rng = np.random.default_rng(4)
        v = rng.normal(size=(6, 3))
        for fam in (MatrixLp(), MatrixLp(shape="full"), MatrixPolynomial(degree=3)):
            theta = fam.project(fam.identity(3) + 0.3 * rng.normal(size=fam.identity(3).size), 3)
            np.testing.assert_allclose(fam.apply(theta, 3, v), evaluate(realize(fam, theta, 3), v), rtol=1e-12)

    def test_parse(self):
        assert parse_family("matlp:diag,0.1,10,p,0.5,4") == MatrixLp("diagonal", (0.1, 10), (0.5, 4))
        assert parse_family("matlp:full") == MatrixLp("full")
        assert parse_family("matpoly:deg5") == MatrixPolynomial(degree=5)
        for bad in ("matlp:round", "nope:1", "matpoly:cubic", "matlp:diag,1"):
            with pytest.raises(InvalidParameter):
                parse_family(bad)

    def test_box_validation(self):
        with pytest.raises(InvalidParameter):
            MatrixLp(entry_bounds=(0, 1))
        with pytest.raises(InvalidParameter):
            MatrixLp(p_range=(0.05, 2))
        with pytest.raises(InvalidParameter):
            MatrixPolynomial(beta=0)


class TestSplit:
    def test_sizes(self):
        ds = axis_data(10, 0)
        s = split_sample(ds, 0.5, seed=1)
        assert s.classify_part.n == 5 and s.select_part.n == 5

    def test_partition_and_determinism(self):
        ds = axis_data(37, 0)
        a = split_sample(ds, 0.3, seed=2)
        b = split_sample(ds, 0.3, seed=2)
        np.testing.assert_array_equal(a.classify_index, b.classify_index)
        assert sorted(np.concatenate([a.classify_index, a.select_index])) == list(range(37))
        np.testing.assert_array_equal(a.select_part.tiebreak, ds.tiebreak[a.select_index])

    def test_errors(self):
        with pytest.raises(TooSmall):
            split_sample(axis_data(1, 0), 0.5)
        with pytest.raises(InvalidParameter):
            split_sample(axis_data(10, 0), 1.0)


class TestSelection:
    def test_collapsed_box(self):
        fam = MatrixLp(entry_bounds=(3, 3), p_range=(1, 1))
        split = split_sample(axis_data(200, 0), 0.5, seed=0)
        spec = select_local_distance(split, [0, 0], LocalMetricQuery(family=fam))
        np.testing.assert_allclose(spec.array, np.diag([3.0, 3.0]), rtol=1e-15)
        assert spec.inner.p == pytest.approx(1.0, rel=1e-15)

    def test_budget_one_is_identity(self):
        split = split_sample(axis_data(200, 0), 0.5, seed=0)
        spec = select_local_distance(split, [0, 0], LocalMetricQuery(budget=1))
        assert spec == diagonal([1, 1], LpNorm(2))

    def test_learns_informative_axis(self):
        split = split_sample(axis_data(400, 3), 0.5, seed=0)
        q = LocalMetricQuery(k1=20, k2=100, budget=300)
        spec = select_local_distance(split, [0.05, 0.5], q)
        d = np.diag(spec.array)
        assert d[0] > d[1]

    @pytest.mark.parametrize("opt", [NelderMead(), Anneal(max_evals=150)])
    def test_never_worse_than_identity(self, opt):
        split = split_sample(axis_data(200, 4), 0.5, seed=0)
        for i, query in enumerate(np.random.default_rng(0).uniform(-1, 1, size=(5, 2))):
            sel = select_local_distance_detailed(split, query, LocalMetricQuery(budget=60), opt, seed=i)
            assert sel.objective <= sel.identity_objective
            assert sel.objective == pytest.approx(local_objective(split.select_part, query, sel.params,
                                                                  LocalMetricQuery()))

    def test_deterministic(self):
        split = split_sample(axis_data(200, 4), 0.5, seed=0)
        q = LocalMetricQuery(budget=80)
        a = select_local_distance(split, [0.2, 0.2], q, Anneal(seed=1), seed=5)
        b = select_local_distance(split, [0.2, 0.2], q, Anneal(seed=1), seed=5)
        assert a == b

    def test_empty_select(self):
        ds = axis_data(10, 0)
        split = SplitSample(ds, ds.subset([]), 0.5, 0)
        with pytest.raises(EmptySelectSet):
            select_local_distance(split, [0, 0], LocalMetricQuery())


class TestPredictLocal:
    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_vacuous_restriction_equals_plain(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(12, 40))
        x = rng.integers(-3, 4, size=(n, 2)).astype(float)
        ds = make_dataset(x, rng.integers(0, 2, size=n), seed=seed)
        k = int(rng.integers(1, n + 1))
        q = LocalMetricQuery(k1=2, k2=5, m=n, family=IDENTITY_L2, budget=5)
        query = rng.integers(-3, 4, size=2).astype(float)
        got = predict_local(shared_sample(ds), query, q, k=k)
        assert got == predict_binary(ds, LpNorm(2), query, k)

    def test_mk_equals_k_ignores_spec(self):
        ds = axis_data(100, 5)
        split = split_sample(ds, 0.5, seed=0)
        base = predict_local(split, [0.1, 0.0], LocalMetricQuery(m=1, family=IDENTITY_L2), k=7)
        other = predict_local(split, [0.1, 0.0], LocalMetricQuery(m=1), k=7)
        assert base == other == predict(split.classify_part, LpNorm(2), [0.1, 0.0], 7)

    def test_support_within_base_neighbourhood(self):
        ds = axis_data(300, 6)
        split = split_sample(ds, 0.5, seed=0)
        q = LocalMetricQuery(m=3, budget=60)
        for i, query in enumerate(np.random.default_rng(1).uniform(-1, 1, size=(10, 2))):
            res = predict_local_detailed(split, query, q, k=5, seed=i)
            base = rank(evaluate(LpNorm(2), split.classify_part.features - query),
                        split.classify_part.tiebreak, 15)
            assert set(res.support) <= set(base)
            assert len(res.support) == 5

    def test_local_k_in_range(self):
        ds = axis_data(200, 7)
        split = split_sample(ds, 0.5, seed=0)
        k = choose_local_k(split, [0.2, 0.0], LpNorm(2), LocalMetricQuery(), k_max=15)
        assert 1 <= k <= 15
        shared = shared_sample(ds)
        # leave-one-out keeps a point from voting for itself
        assert choose_local_k(shared, [0.2, 0.0], LpNorm(2), LocalMetricQuery(), k_max=15) >= 1

    @pytest.mark.slow
    def test_beats_euclidean_on_two_scale_data(self):
        train = axis_data(600, 8, noise=20.0)
        test = axis_data(500, 9, noise=20.0)
        split = split_sample(train, 0.5, seed=0)
        q = LocalMetricQuery(k1=20, k2=100, budget=100)
        local = [predict_local(split, x, q, k=5, seed=i) for i, x in enumerate(test.features)]
        plain = [predict(split.classify_part, LpNorm(2), x, 5) for x in test.features]
        acc_local = np.mean(np.array(local) == test.labels)
        acc_plain = np.mean(np.array(plain) == test.labels)
        assert acc_local >= acc_plain
