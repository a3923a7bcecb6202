import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teleport.measures import (FAMILIES, DensitySpec, DiscreteMeasure, SignedMeasure, check_ahlfors,
                               discretize, is_balanced, jordan_decompose, perturb, restrict, total_mass)
from teleport.component_graph import label_components


def test_total_mass_examples():
    assert total_mass(DiscreteMeasure.empty()) == 0
    assert total_mass(DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])) == 1.0
    assert abs(total_mass(discretize(DensitySpec("uniform-interval"), 100)) - 1.0) <= 1e-12


def test_zero_weights_dropped_and_coincident_merged():
    m = DiscreteMeasure([[0.0], [1.0], [0.0], [2.0]], [0.25, 0.0, 0.5, 0.25])
    assert len(m) == 2
    assert np.allclose(m.weights, [0.75, 0.25])
    m = DiscreteMeasure([[0.0], [5e-13]], [1.0, 1.0])
    assert len(m) == 1 and m.mass == 2.0


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        DiscreteMeasure([[0.0]], [-1.0])


def test_jordan_examples():
    nu = jordan_decompose([([0.0], 1.0), ([1.0], -1.0)])
    assert nu.plus.mass == 1 and nu.minus.mass == 1 and nu.total_variation == 2
    nu = jordan_decompose([([0.0], 1.0), ([0.0], -1.0)])
    assert len(nu.plus) == 0 and len(nu.minus) == 0 and nu.total_variation == 0
    nu = jordan_decompose([([0.0], 2.0), ([0.0], -0.5), ([1.0], -1.5)])
    assert np.allclose(nu.plus.points, [[0.0]]) and np.isclose(nu.plus.mass, 1.5)
    assert np.allclose(nu.minus.points, [[1.0]]) and np.isclose(nu.minus.mass, 1.5)
    assert np.isclose(nu.total_variation, 3.0)


def test_signed_measure_rejects_overlap():
    with pytest.raises(ValueError):
        SignedMeasure(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([0.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.floats(-3, 3, allow_nan=False)), min_size=1, max_size=20))
def test_jordan_roundtrip_and_neutrality(atoms):
    atoms = [([float(x)], w) for x, w in atoms]
    nu = jordan_decompose(atoms)
    assert np.isclose(nu.plus.mass - nu.minus.mass, sum(w for _, w in atoms), atol=1e-9)
    assert nu.total_variation == nu.plus.mass + nu.minus.mass
    again = jordan_decompose(nu.to_atoms())
    assert again.plus.same_as(nu.plus) and again.minus.same_as(nu.minus)
    neutral = atoms + [([9.0], -sum(w for _, w in atoms))]
    assert is_balanced(jordan_decompose(neutral), 1e-9)


def test_is_balanced_examples():
    one = DiscreteMeasure.dirac([0.0])
    assert is_balanced(SignedMeasure(one, DiscreteMeasure.dirac([1.0])), 1e-12)
    assert not is_balanced(SignedMeasure(one, DiscreteMeasure.dirac([1.0], 0.9)), 1e-12)


def test_perturb_examples():
    mu = DiscreteMeasure.dirac([0.0])
    nu = SignedMeasure(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([1.0]))
    a, b = perturb(mu, 0.0, nu)
    assert a.same_as(mu) and b.same_as(mu)
    a, b = perturb(mu, 0.1, nu)
    assert a.same_as(DiscreteMeasure([[0.0]], [1.1]))
    assert b.same_as(DiscreteMeasure([[0.0], [1.0]], [1.0, 0.1]))


def test_perturb_mass_balance(rng):
    mu = discretize(DensitySpec("uniform-box"), 12)
    nu = SignedMeasure(DiscreteMeasure(rng.random((3, 2)), [0.2, 0.3, 0.5]), DiscreteMeasure(rng.random((2, 2)) + 2, [0.5, 0.5]))
    for eps in (0.0, 1e-3, 0.7):
        a, b = perturb(mu, eps, nu)
        assert abs(a.mass - b.mass) <= 1e-12


def test_restrict_partitions_mass():
    mu = discretize(DensitySpec("two-component", {"split": 0.3}), 50)
    lab = label_components(mu, 0.1)
    parts = [restrict(mu, lab, j) for j in range(lab.m)]
    assert np.isclose(parts[0].mass, 0.3, atol=1e-12) and np.isclose(parts[1].mass, 0.7, atol=1e-12)
    assert (parts[0] + parts[1]).same_as(mu)
    single = discretize(DensitySpec("uniform-interval"), 20)
    assert restrict(single, label_components(single, 0.1), 0).same_as(single)
    with pytest.raises(ValueError):
        restrict(mu, lab, 2)


def test_discretize_midpoints():
    m = discretize(DensitySpec("uniform-interval"), 4)
    assert np.allclose(m.points[:, 0], [0.125, 0.375, 0.625, 0.875])
    assert np.allclose(m.weights, 0.25)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("n", [3, 17, 40])
def test_discretize_preserves_mass(family, n):
    m = discretize(DensitySpec(family, {"mass": 2.5}), n)
    assert abs(m.mass - 2.5) <= 1e-12 * 2.5
    assert np.all(m.weights > 0)


def test_polynomial_and_wedge():
    assert abs(discretize(DensitySpec("polynomial-1d"), 31).mass - 1) <= 1e-12
    m = discretize(DensitySpec("wedge", {"beta": 1.0, "k": 2}), 50)
    assert np.all(np.abs(m.points[:, 1]) <= m.points[:, 0])


def test_discretize_errors():
    with pytest.raises(ValueError):
        discretize(DensitySpec("uniform-interval"), 1)
    with pytest.raises(ValueError):
        DensitySpec("no-such-family")
    with pytest.raises(ValueError):
        DensitySpec("uniform-interval", {"bogus": 1})


def test_ahlfors_interval():
    rep = check_ahlfors(discretize(DensitySpec("uniform-interval"), 400), 1, 0.25)
    assert rep.ok and rep.K_est >= 0.5


def test_ahlfors_square_with_lower_d():
    assert check_ahlfors(discretize(DensitySpec("uniform-box"), 40), 1, 0.2).ok


def test_ahlfors_component_matches_single():
    two = discretize(DensitySpec("two-component"), 200)
    lab = label_components(two, 0.1)
    first = restrict(two, lab, 0)
    one = discretize(DensitySpec("uniform-interval", {"mass": 0.5}), 200)
    assert np.isclose(check_ahlfors(first, 1, 0.25).K_est, check_ahlfors(one, 1, 0.25).K_est)


def test_ahlfors_rejects_small_delta():
    with pytest.raises(ValueError):
        check_ahlfors(discretize(DensitySpec("uniform-interval"), 10), 1, 0.01)
