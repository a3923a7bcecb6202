import numpy as np
import pytest

from teleport.asymptotics import (CurveExperiment, EpsilonGrid, LinearMass, critical_ratio_check, curve_holder_experiment,
                                  log_log_fit, predicted_exponent, richardson, scaling_experiment,
                                  teleport_limit_check, worker_count)
from teleport.measures import DensitySpec, DiscreteMeasure, SignedMeasure, discretize
from teleport.ot_exact import bounding_diameter


def test_predicted_exponent_values():
    assert predicted_exponent(1, 2) == (1.0, False)
    q, crit = predicted_exponent(3, 2)
    assert np.isclose(q, 5 / 6) and not crit
    assert predicted_exponent(2, 2) == (1.0, True)
    assert predicted_exponent(3, 1.5)[1]
    assert not predicted_exponent(1, 1e9)[1]


def test_grid():
    g = EpsilonGrid.geometric()
    v = np.asarray(g)
    assert v[0] == 0.1 and v[-1] >= 1e-3 and len(g) == 10
    assert np.allclose(v[1:] / v[:-1], 0.6)
    with pytest.raises(ValueError):
        EpsilonGrid((0.1, 0.05, 0.01))
    with pytest.raises(ValueError):
        EpsilonGrid((0.1, 0.2, 0.01, 0.001, 1e-4))


def test_log_log_fit_drops_largest():
    x = np.array([1.0, 0.5, 0.25, 0.125])
    y = x ** 2
    y[0] = 100.0
    slope, se = log_log_fit(x, y)
    assert np.isclose(slope, 2.0) and se < 1e-12


def test_richardson_exact_on_model():
    f = lambda e: 3.0 + 0.7 * e ** 0.5
    assert np.isclose(richardson(0.01, 0.005, f(0.01), f(0.005), 0.5), 3.0)


def interval(n=100_000):
    return discretize(DensitySpec("uniform-interval"), n)


def endpoint_dipole(mu):
    return SignedMeasure(DiscreteMeasure.dirac(mu.points[0]), DiscreteMeasure.dirac(mu.points[-1]))


def test_scaling_degenerate():
    mu = interval(1000)
    empty = SignedMeasure(DiscreteMeasure.empty(), DiscreteMeasure.empty())
    r = scaling_experiment(mu, empty, 2.0, EpsilonGrid.geometric())
    assert r.degenerate and np.all(r.w == 0)


def test_scaling_uniform_interval():
    mu = interval()
    nu = endpoint_dipole(mu)
    r = scaling_experiment(mu, nu, 2.0, EpsilonGrid.geometric())
    assert 0.95 <= r.q_hat <= 1.05
    eps = np.asarray(r.eps)
    # nondecreasing in eps and below the TV transport bound
    assert np.all(np.diff(r.w[::-1]) >= -1e-9)
    diam = bounding_diameter(mu)
    assert np.all(eps ** -0.5 * r.w <= diam * nu.total_variation ** 0.5 + 1e-8)


def test_scaling_rejects_noise_floor_and_unbalanced():
    mu = interval(100)
    with pytest.raises(ValueError):
        scaling_experiment(mu, endpoint_dipole(mu), 2.0, EpsilonGrid.geometric())
    mu = interval()
    nu = SignedMeasure(DiscreteMeasure.dirac(mu.points[0]), DiscreteMeasure.dirac(mu.points[-1], 0.5))
    with pytest.raises(ValueError):
        scaling_experiment(mu, nu, 2.0, EpsilonGrid.geometric())


@pytest.mark.slow
def test_square_exponent_p3():
    # d = 2, p = 3: q = 1/2 + 1/3
    mu = discretize(DensitySpec("uniform-box"), 60)
    nu = SignedMeasure(DiscreteMeasure.dirac(mu.points[0]), DiscreteMeasure.dirac(mu.points[-1]))
    grid = EpsilonGrid.geometric(0.2, 0.01, 0.55)
    r = scaling_experiment(mu, nu, 3.0, grid, noise_floor=1.0)
    assert abs(r.q_hat - 5 / 6) <= 0.05


def beta(d, n=200_000):
    mu = discretize(DensitySpec("beta-profile", {"d": float(d)}), n)
    return mu, endpoint_dipole(mu)


def test_exponent_separation():
    r1 = scaling_experiment(*beta(1), 2.0, EpsilonGrid.geometric(), d=1)
    r3 = scaling_experiment(*beta(3), 2.0, EpsilonGrid.geometric(), d=3)
    assert r1.q_hat - r3.q_hat > 3 * np.hypot(r1.stderr, r3.stderr)


def test_critical_ratio_examples():
    noncrit = scaling_experiment(*beta(1), 2.0, EpsilonGrid.geometric(), d=1)
    assert np.all(np.diff(noncrit.critical_ratio) < 0)
    crit = scaling_experiment(*beta(2), 2.0, EpsilonGrid.geometric(), d=2)
    rep = critical_ratio_check(crit)
    assert crit.critical and rep.spread < 3 and rep.linear_growth > 1.3


def test_critical_single_point_spread():
    from teleport.asymptotics import ScalingResult
    r = ScalingResult(EpsilonGrid.geometric(), np.full(10, 0.2), 1.0, 1.0, 0.0, np.full(10, 0.4), True, 2.0)
    assert critical_ratio_check(r).spread == 1.0


def test_teleport_limit_two_component():
    mu = discretize(DensitySpec("two-component"), 20_000)
    nu = SignedMeasure(DiscreteMeasure.dirac([0.5]), DiscreteMeasure.dirac([2.5]))
    rep = teleport_limit_check(mu, nu, 2.0, EpsilonGrid.geometric(), 0.1)
    assert rep.m == 2 and np.isclose(rep.target, 1.0, atol=1e-3)
    assert rep.rel_deviation < 0.05 and rep.richardson_deviation < 0.02
    assert np.all(rep.estimates >= rep.lower_bounds - 1e-9)
    assert np.all(np.diff(rep.estimates) < 0)


def test_teleport_limit_zero_charge():
    mu = discretize(DensitySpec("two-component"), 20_000)
    nu = SignedMeasure(DiscreteMeasure.dirac([0.2]), DiscreteMeasure.dirac([0.8]))
    rep = teleport_limit_check(mu, nu, 2.0, EpsilonGrid.geometric(), 0.1)
    assert rep.target == 0
    assert rep.estimates[-1] < 0.5 * rep.estimates[0]


def test_teleport_limit_single_component():
    mu = interval(10_000)
    with pytest.raises(ValueError):
        teleport_limit_check(mu, endpoint_dipole(mu), 2.0, EpsilonGrid.geometric(), 0.1)


T = np.linspace(0, 0.5, 6)


def test_curve_pure_diracs():
    r = curve_holder_experiment(CurveExperiment(T, LinearMass(0.3, 0.4), 0.0, 1.0), 3.0)
    assert abs(r.exponent - 1 / 3) < 0.01


def test_curve_with_background():
    r = curve_holder_experiment(CurveExperiment(T, LinearMass(0.3, 0.4), 0.0, 1.0, interval()), 2.0)
    assert abs(r.exponent - 1.0) < 0.05


def test_curve_constant_m():
    r = curve_holder_experiment(CurveExperiment(T, LinearMass(0.5, 0.0), 0.0, 1.0), 2.0)
    assert r.degenerate and np.all(r.distances == 0)


def test_curve_rejects_m_outside():
    with pytest.raises(ValueError):
        curve_holder_experiment(CurveExperiment(T, LinearMass(0.0, 2.0), 0.0, 1.0), 2.0)


def test_workers_env(monkeypatch):
    monkeypatch.setenv("TELEPORT_WORKERS", "2")
    assert worker_count() == 2
    r = curve_holder_experiment(CurveExperiment(T, LinearMass(0.3, 0.4), 0.0, 1.0), 2.0)
    assert abs(r.exponent - 0.5) < 1e-9
    monkeypatch.setenv("TELEPORT_WORKERS", "many")
    with pytest.raises(ValueError):
        worker_count()
