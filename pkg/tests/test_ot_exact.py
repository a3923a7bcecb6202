import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teleport.measures import DensitySpec, DiscreteMeasure, discretize
from teleport.ot_exact import (SolverError, bounding_diameter, homogeneity_check, solve_log,
                               verify_monotone_additivity, wasserstein, wasserstein_1d, wasserstein_p)

from conftest import random_measure


def d(*pairs):
    return DiscreteMeasure([[x] for x, _ in pairs], [w for _, w in pairs])


def test_identity_plan(rng):
    a = random_measure(rng, 30, 2)
    res = wasserstein_p(a, a, 2.0)
    assert res.value == 0
    assert np.all(res.plan.rows == res.plan.cols)


def test_single_pair():
    assert np.isclose(wasserstein_p(d((0, 1)), d((1, 1)), 2.0).value, 1.0)


def test_split_to_one():
    res = wasserstein_p(d((0, 0.5), (2, 0.5)), d((1, 1)), 2.0)
    assert np.isclose(res.value, 1.0)
    assert np.isclose(res.plan.cost, 1.0)


def test_quantile_shift():
    a, b = d((0, 0.5), (1, 0.5)), d((0.5, 0.5), (1.5, 0.5))
    assert np.isclose(wasserstein_1d(a, b, 2), 0.5, atol=1e-15)
    assert np.isclose(wasserstein_p(a, b, 2).value, 0.5, atol=1e-12)


def test_quantile_identical_and_p1():
    a = d((0, 0.2), (1, 0.8))
    assert wasserstein_1d(a, a, 1.0) == 0
    assert np.isclose(wasserstein_1d(d((0, 1)), d((3, 1)), 1.0), 3.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_lp_matches_quantile(rng, p):
    for _ in range(30):
        a = random_measure(rng, int(rng.integers(1, 120)))
        b = random_measure(rng, int(rng.integers(1, 120)))
        assert abs(wasserstein_p(a, b, p).value - wasserstein_1d(a, b, p)) <= 1e-9


def test_endpoint_perturbation_matches_lp():
    mu = discretize(DensitySpec("beta-profile", {"d": 2.0}), 300)
    eps = 0.05
    a = mu + DiscreteMeasure.dirac(mu.points[0], eps)
    b = mu + DiscreteMeasure.dirac(mu.points[-1], eps)
    assert abs(wasserstein_1d(a, b, 2) - wasserstein_p(a, b, 2).value) <= 1e-9


def test_column_generation_path(rng):
    for dim in (1, 2, 3):
        a = random_measure(rng, 80, dim)
        b = random_measure(rng, 70, dim)
        dense = wasserstein_p(a, b, 2.0)
        sparse = wasserstein_p(a, b, 2.0, dense_limit=0)
        assert abs(dense.value - sparse.value) <= 1e-10


def test_certificates(rng):
    a, b = random_measure(rng, 60, 2), random_measure(rng, 45, 2)
    res = wasserstein_p(a, b, 3.0)
    plan, duals = res.plan, res.duals
    assert plan.marginal_error() <= 1e-9
    assert abs(plan.recompute_cost() - plan.cost) <= 1e-12 * plan.cost
    assert duals.max_violation(a, plan.target) <= 1e-9
    assert duals.slackness_error(plan) <= 1e-9
    assert res.gap <= 1e-7 * (1 + plan.cost)


def test_solve_log_records(rng):
    with solve_log() as log:
        wasserstein_p(random_measure(rng, 10), random_measure(rng, 12), 2.0)
        wasserstein_p(random_measure(rng, 10, 2), random_measure(rng, 12, 2), 2.0, dense_limit=0)
    assert len(log) == 2
    assert all(r["gap"] <= 1e-7 * (1 + r["cost"]) for r in log)


def test_input_errors():
    with pytest.raises(ValueError):
        wasserstein_p(d((0, 1)), d((1, 2)), 2.0)
    with pytest.raises(ValueError):
        wasserstein_p(d((0, 1)), DiscreteMeasure([[0.0, 1.0]], [1.0]), 2.0)
    with pytest.raises(ValueError):
        wasserstein_p(DiscreteMeasure.empty(), DiscreteMeasure.empty(), 2.0)
    with pytest.raises(ValueError):
        wasserstein_p(d((0, 1)), d((1, 1)), 1.0)
    with pytest.raises(ValueError):
        wasserstein_1d(DiscreteMeasure([[0.0, 1.0]], [1.0]), DiscreteMeasure([[0.0, 1.0]], [1.0]), 2)


def test_mass_within_tolerance_accepted():
    res = wasserstein_p(d((0, 1)), d((1, 1 + 1e-12)), 2.0)
    assert np.isclose(res.value, 1.0)


def test_monotone_additivity_examples(rng):
    a, b = d((0, 1)), d((1, 1))
    lhs, rhs, ok = verify_monotone_additivity(a, b, DiscreteMeasure.empty(), 2.0)
    assert ok and np.isclose(lhs, rhs)
    lam = discretize(DensitySpec("uniform-interval", {"mass": 20.0}), 200)
    lhs, rhs, ok = verify_monotone_additivity(a, b, lam, 2.0)
    assert ok and np.isclose(lhs, 1.0) and rhs < lhs
    for _ in range(20):
        lam = random_measure(rng, 15, 2, 2.0)
        assert verify_monotone_additivity(random_measure(rng, 20, 2), random_measure(rng, 25, 2), lam, 2.0)[2]


def test_homogeneity_examples(rng):
    a, b = d((0, 1)), d((1, 1))
    assert homogeneity_check(a, b, 1.0, 2.0)
    assert np.isclose(wasserstein(a.scale(4), b.scale(4), 2.0), 2.0)
    for alpha in (0.5, 2, 10):
        assert homogeneity_check(random_measure(rng, 20, 2), random_measure(rng, 30, 2), alpha, 3.0)


def test_metric_axioms(rng):
    for _ in range(10):
        a, b, c = (random_measure(rng, 25, 2) for _ in range(3))
        ab, ba = wasserstein(a, b, 2), wasserstein(b, a, 2)
        assert abs(ab - ba) <= 1e-9
        assert wasserstein(a, c, 2) <= ab + wasserstein(b, c, 2) + 1e-8
        assert ab > 0


def test_tv_bound(rng):
    for _ in range(10):
        plus = random_measure(rng, 8, 2, 0.7)
        minus = random_measure(rng, 5, 2, 0.7)
        diam = bounding_diameter(plus, minus)
        assert wasserstein(plus, minus, 2.0) <= diam * (plus.mass + minus.mass) ** 0.5 + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=15),
       st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=15),
       st.sampled_from([1.5, 2.0, 3.0]))
def test_lp_matches_quantile_hypothesis(xs, ys, p):
    a = DiscreteMeasure([[x] for x in xs], np.full(len(xs), 1 / len(xs)))
    b = DiscreteMeasure([[y] for y in ys], np.full(len(ys), 1 / len(ys)))
    b = b.scale(a.mass / b.mass)
    assert abs(wasserstein_p(a, b, p).value - wasserstein_1d(a, b, p)) <= 1e-9
