import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from floesim.errors import ConfigurationError, ParameterError
from floesim.floes import (Domain, Floe, MaterialParams, SizeDistribution, ThicknessDistribution,
                           benchmark_field, concentration, derived_properties, field_statistics,
                           initialize_field, minimum_image, sample_radii, sample_radius,
                           sample_thickness)


def test_inverse_cdf_radius_endpoints():
    dist = SizeDistribution(1.0, 1500.0)
    assert sample_radius(0.0, dist) == 1500.0
    assert sample_radius(0.5, dist) == pytest.approx(3000.0, rel=1e-15)


@pytest.mark.parametrize("u", [math.nan, -0.1, 1.0])
def test_invalid_uniform_rejected(u):
    with pytest.raises(ParameterError):
        sample_radius(u, SizeDistribution())


def test_invalid_distribution_parameters():
    with pytest.raises(ParameterError):
        SizeDistribution(0.0, 1500.0)
    with pytest.raises(ParameterError):
        ThicknessDistribution(2.0, -1.0)


def test_radius_capping_redraws_inside_caps():
    rng = np.random.default_rng(1)
    r = sample_radii(rng, 5000, SizeDistribution(), (1000.0, 10_000.0))
    assert r.min() >= 1500.0 and r.max() <= 10_000.0


def test_radius_power_law_ks():
    rng = np.random.default_rng(2)
    dist = SizeDistribution(1.0, 1500.0)
    r = sample_radii(rng, 1_000_000, dist, caps=None)
    ks = stats.kstest(r, lambda x: 1.0 - (1500.0 / np.maximum(x, 1500.0)))
    assert ks.statistic < 0.005


def test_thickness_mean_uncapped():
    rng = np.random.default_rng(3)
    h = sample_thickness(rng, ThicknessDistribution(2.0, 1.3), caps=None, size=1_000_000)
    assert h.mean() == pytest.approx(2.6, rel=0.01)


def test_thickness_density_against_tabulated_form():
    tabulated = 0.59 * 1.3 * math.exp(-0.77 * 1.3)
    assert ThicknessDistribution(2.0, 1.3).pdf(np.array([1.3]))[0] == pytest.approx(tabulated, rel=0.01)


def test_thickness_caps():
    rng = np.random.default_rng(4)
    h = sample_thickness(rng, ThicknessDistribution(), (0.1, 3.5), size=20_000)
    assert h.min() >= 0.1 and h.max() <= 3.5


def test_mass_and_inertia():
    m, inertia = derived_properties(Floe(1, 1000.0, 1.0), MaterialParams())
    assert m == pytest.approx(2.827e9, rel=1e-3)
    assert inertia == pytest.approx(2.827e15, rel=1e-3)


def test_zero_thickness_rejected():
    with pytest.raises(ParameterError):
        Floe(1, 1000.0, 0.0)


@given(st.floats(10.0, 1e4), st.floats(0.01, 10.0))
def test_doubling_thickness_doubles_mass_and_inertia(r, h):
    mat = MaterialParams()
    m1, i1 = derived_properties(Floe(1, r, h), mat)
    m2, i2 = derived_properties(Floe(1, r, 2 * h), mat)
    assert m2 == 2 * m1 and i2 == 2 * i1


def test_initialize_is_deterministic():
    a = initialize_field(18, seed=7)
    b = initialize_field(18, seed=7)
    for name in ("radius", "thickness", "position", "ids"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_ids_follow_descending_radius():
    f = initialize_field(18, seed=1)
    assert np.array_equal(f.ids, np.arange(1, 19))
    assert np.all(np.diff(f.radius) <= 0)


def test_single_floe_field():
    f = initialize_field(1, seed=3)
    assert len(f) == 1
    assert np.all((f.position >= 0) & (f.position < f.domain.side))


def test_infeasible_concentration_rejected():
    with pytest.raises(ConfigurationError):
        initialize_field(200, seed=0)


def test_benchmark_population_concentration_range():
    f = benchmark_field(200, seed=0)
    assert 0.1 <= concentration(f) <= 0.8
    assert concentration(f) == pytest.approx(0.78, abs=0.03)


def test_concentration_examples():
    dom = Domain(50_000.0)
    from floesim.floes import FloeField
    empty = FloeField(dom, [], [], [], np.zeros((0, 2)))
    assert concentration(empty) == 0.0
    one = FloeField(dom, [1], [2000.0], [1.0], [[1.0, 2.0]])
    assert concentration(one) == pytest.approx(math.pi * 2000.0**2 / 50_000.0**2, rel=1e-15)


@given(st.integers(1, 60), st.integers(0, 2**31 - 1))
def test_concentration_matches_independent_loop(n, seed):
    f = initialize_field(n, seed=seed, radius_caps=(1000.0, 3000.0))
    total = 0.0
    for r in f.radius.tolist():
        total += math.pi * r * r
    assert concentration(f) == pytest.approx(total / f.domain.side**2, rel=1e-13)


def test_field_statistics_keys():
    s = field_statistics(initialize_field(10, seed=2))
    assert set(s) == {"n", "c", "r_min", "r_max", "h_min", "h_max"}


def test_minimum_image_examples():
    side = 50_000.0
    assert np.allclose(minimum_image(np.array([48_000.0, 0.0]), side), [-2000.0, 0.0])
    assert np.array_equal(minimum_image(np.zeros(2), side), [0.0, 0.0])
    assert minimum_image(25_000.0, side) == 25_000.0
    assert minimum_image(-25_000.0, side) == 25_000.0


@given(st.floats(-1e6, 1e6))
def test_minimum_image_range(d):
    side = 50_000.0
    w = float(minimum_image(d, side))
    assert -side / 2 < w <= side / 2
    assert abs(math.remainder(w - d, side)) < 1e-6
