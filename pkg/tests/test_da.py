import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import kalman_toy
from conftest import make_field
from floesim.da import (DAScenario, InflationCoefficients, StateLayout, assimilate, eakf_update,
                        inflation_from_superfloes, kalman_scalar, lagged_std, observe, pcc, rmse)
from floesim.errors import (ConfigurationError, InsufficientDataError, ParameterError,
                            UndefinedScoreError)
from floesim.floes import MaterialParams, initialize_field
from floesim.integrator import Ensemble, SimulationState
from floesim.ocean import ModeClassParams, build_mode_set, draw_stationary
from floesim.superfloe import ReductionConfig


def test_scalar_posterior_example():
    assert kalman_scalar(0.0, 1.0, 2.0, 1.0) == (1.0, 0.5)


def test_one_dimensional_update_matches_closed_form():
    rng = np.random.default_rng(0)
    S = rng.normal(3.0, 2.0, (500, 1))
    post = eakf_update(S, [0], [4.5], [0.7])
    m, v = kalman_scalar(S.mean(), S.var(ddof=1), 4.5, 0.7)
    assert post.mean() == pytest.approx(m, rel=1e-13)
    assert post.var(ddof=1) == pytest.approx(v, rel=1e-13)
    # the update is affine, so the ensemble shape is preserved
    z0 = (S - S.mean()) / S.std()
    z1 = (post - post.mean()) / post.std()
    assert np.allclose(z0, z1, atol=1e-12)


def test_uncorrelated_component_unchanged():
    S = np.array([[-1.0, 1.0], [1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
    post = eakf_update(S, [0], [3.0], [0.5])
    assert np.array_equal(post[:, 1], S[:, 1])
    assert not np.array_equal(post[:, 0], S[:, 0])


def test_update_does_not_modify_input_and_is_deterministic():
    S = np.random.default_rng(1).normal(size=(40, 5))
    keep = S.copy()
    a = eakf_update(S, [1, 3], [0.2, -0.4], [0.3, 0.3])
    b = eakf_update(S, [1, 3], [0.2, -0.4], [0.3, 0.3])
    assert np.array_equal(S, keep)
    assert np.array_equal(a, b)


@given(arrays(float, (30, 3), elements=st.floats(-100, 100)), st.floats(-100, 100),
       st.floats(0.01, 100.0))
def test_posterior_variance_never_grows(S, y, r):
    if S[:, 0].var() < 1e-6:
        return
    post = eakf_update(S, [0], [y], [r])
    assert np.all(post.var(axis=0) <= S.var(axis=0) * (1 + 1e-9) + 1e-12)


def test_observation_order_matters_only_by_sampling_error():
    rng = np.random.default_rng(2)
    cov = np.array([[1.0, 0.5, 0.2], [0.5, 2.0, 0.3], [0.2, 0.3, 1.5]])
    S = rng.multivariate_normal(np.zeros(3), cov, 10_000)
    a = eakf_update(S, [0, 1], [0.5, -0.8], [0.4, 0.6])
    b = eakf_update(S, [1, 0], [-0.8, 0.5], [0.6, 0.4])
    std = S.std(axis=0)
    assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) < 0.01 * std)
    assert np.allclose(a.var(axis=0), b.var(axis=0), rtol=0.01)


def test_periodic_component_wraps():
    side = 50_000.0
    rng = np.random.default_rng(3)
    x = np.mod(49_900.0 + rng.normal(0, 150.0, 200), side)
    S = np.column_stack([x, rng.normal(size=200)])
    post = eakf_update(S, [0], [100.0], [150.0**2], periods=[side, 0.0])
    assert np.all((post[:, 0] >= 0) & (post[:, 0] < side))
    # the innovation crosses the seam: the mean moves forward, not back across the domain
    rel = np.mod(post[:, 0] - 49_900.0 + side / 2, side) - side / 2
    assert 0.0 < rel.mean() < 250.0


def test_zero_spread_skips_with_warning():
    S = np.column_stack([np.full(10, 2.0), np.arange(10.0)])
    with pytest.warns(RuntimeWarning):
        post = eakf_update(S, [0], [5.0], [1.0])
    assert np.array_equal(post, S)


def test_update_input_validation():
    with pytest.raises(ParameterError):
        eakf_update(np.zeros((1, 2)), [0], [0.0], [1.0])
    with pytest.raises(ParameterError):
        eakf_update(np.ones((3, 2)), [0], [0.0], [0.0])


def test_matched_ensemble_reproduces_kalman_filter():
    mean_err, var_err = kalman_toy.errors(kalman_toy.run())
    assert mean_err.max() < 1e-10 and var_err.max() < 1e-10


def test_random_ensemble_tracks_kalman_filter_on_average():
    # per-cycle sampling error of a 1e4-member variance is about sqrt(2/N) = 1.4 %
    mean_err, var_err = kalman_toy.errors(kalman_toy.run(seed=3, matched=False))
    assert mean_err.mean() < 0.02 and var_err.mean() < 0.02


def test_observe_without_noise_and_wrapping():
    field = make_field([[49_990.0, 100.0], [100.0, 200.0]], [500.0, 400.0])
    rng = np.random.default_rng(0)
    exact = observe(field, [2, 1], 50.0, 0.01, rng, noisy=False)
    assert np.array_equal(exact.position, field.position[[1, 0]])
    assert exact.ids.tolist() == [2, 1]
    assert field.domain.wrap(np.array([49_990.0 + 30.0, 0.0]))[0] == pytest.approx(20.0)


def test_observation_noise_crosses_the_seam():
    field = make_field([[49_990.0, 100.0]], [500.0])
    rng = np.random.default_rng(4)
    xs = np.array([observe(field, [1], 30.0, 0.01, rng).position[0, 0] for _ in range(400)])
    assert np.all((xs >= 0) & (xs < 50_000.0))
    assert np.any(xs < 1000.0) and np.any(xs > 49_000.0)
    with pytest.raises(ParameterError):
        observe(field, [1], -1.0, 0.01, rng)


def test_state_layout_round_trip():
    ocean = build_mode_set(1)
    draw_stationary(ocean, np.random.default_rng(5))
    field = initialize_field(8, seed=5)
    ens = Ensemble(SimulationState(field, ocean), 3, MaterialParams())
    rng = np.random.default_rng(6)
    ens.v[:] = rng.normal(size=ens.v.shape)
    ens.omega[:] = rng.normal(size=ens.omega.shape)
    layout = StateLayout(8, len(ocean), field.domain.side)
    S = layout.pack(ens)
    assert S.shape == (3, layout.size)
    before = (ens.x.copy(), ens.angle.copy(), ens.v.copy(), ens.omega.copy(), ens.amp.copy())
    layout.unpack(S.copy(), ens)
    for a, b in zip(before, (ens.x, ens.angle, ens.v, ens.omega, ens.amp)):
        assert np.array_equal(a, b)
    periods = layout.periods()
    assert np.all(periods[layout.block("x1")] == field.domain.side)
    assert np.all(periods[layout.block("angle")] == 2 * math.pi)
    assert np.all(periods[layout.block("re")] == 0)


def test_unpack_restores_conjugate_partners():
    ocean = build_mode_set(1)
    draw_stationary(ocean, np.random.default_rng(7))
    ens = Ensemble(SimulationState(initialize_field(4, seed=1), ocean), 2, MaterialParams())
    layout = StateLayout(4, len(ocean), 50_000.0)
    S = layout.pack(ens)
    S[:, layout.block("re")] += 0.3
    layout.unpack(S, ens)
    rep, part = ocean.rep, ocean.partner
    assert np.array_equal(ens.amp[:, part[rep]], np.conj(ens.amp[:, rep]))


def test_lagged_std():
    assert np.all(lagged_std(np.full((50, 2), 7.0), 3) == 0)
    alternating = np.tile([1.0, -1.0], 30)
    assert lagged_std(alternating, 2) == 0.0
    assert lagged_std(alternating, 1) > 0
    x = np.random.default_rng(8).normal(size=(200, 3))
    assert np.allclose(lagged_std(x, 5), lagged_std(x + 1e3, 5), rtol=1e-9)
    expected = np.std(x[5:] - x[:-5], axis=0, ddof=1)
    assert np.allclose(lagged_std(x, 5), expected, rtol=1e-14)
    with pytest.raises(InsufficientDataError):
        lagged_std(np.zeros(6), 5)
    with pytest.raises(ParameterError):
        lagged_std(np.zeros(10), 0)


def test_inflation_coefficients_round_trip_and_mapping():
    coef = InflationCoefficients(np.array([3, 1]), np.array([[1.0, 2.0], [3.0, 4.0]]),
                                 np.array([5.0, 6.0]), 100, 10)
    back = InflationCoefficients.from_dict(coef.to_dict())
    assert np.array_equal(back.ids, coef.ids) and np.array_equal(back.sigma_force, coef.sigma_force)
    assert back.n_steps == 100 and back.lag == 10
    field = make_field([[0.0, 0.0], [9000.0, 0.0], [0.0, 9000.0]], [900.0, 800.0, 700.0])
    noise = coef.noise_for(field)
    assert np.array_equal(noise.sigma_force, [[3.0, 4.0], [0.0, 0.0], [1.0, 2.0]])
    assert np.array_equal(noise.sigma_torque, [6.0, 0.0, 5.0])


def test_scores():
    t = np.array([1.0, 2.0, 3.0, 5.0])
    assert rmse(t, t) == 0.0 and pcc(t, t) == 1.0
    assert rmse(t, t + 1) == 1.0 and pcc(t, t + 1) == pytest.approx(1.0)
    assert pcc(t, -t) == pytest.approx(-1.0)
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
    with pytest.raises(UndefinedScoreError):
        pcc(t, np.full(4, 2.0))
    with pytest.raises(ParameterError):
        rmse(t, t[:3])
    with pytest.raises(InsufficientDataError):
        pcc([1.0], [1.0])


def test_scenario_validation():
    with pytest.raises(ConfigurationError):
        DAScenario(forecast_model="perfect")
    with pytest.raises(ConfigurationError):
        DAScenario(n_members=1)
    with pytest.raises(ConfigurationError):
        DAScenario(obs_interval_steps=0)


def _truth(seed=0, n=18):
    ocean = build_mode_set(1, gravity=ModeClassParams(0.5, 0.0))
    draw_stationary(ocean, np.random.default_rng(seed))
    return SimulationState(initialize_field(n, seed=seed), ocean)


def test_small_twin_experiment():
    truth = _truth()
    sc = DAScenario("full", n_members=40, n_cycles=6, obs_interval_steps=40, forecast_gravity=False)
    res = assimilate(truth, sc)
    scores = res.scores()
    assert set(scores) == {"ocean_gb", "floe_velocity"}
    assert all(set(v) == {"rmse", "pcc"} for v in scores.values())
    assert res.velocity_truth.shape == (6, 6, 2)
    assert res.mode_truth.shape == (6, 8 // 2)
    assert truth.t == pytest.approx(6 * 40 * 25.0)
    assert np.all(res.velocity_spread > 0)
    assert res.extra["forecast_modes"] == 8


def test_twin_experiment_is_reproducible():
    sc = DAScenario("bare", n_members=10, n_cycles=2, obs_interval_steps=20, seed=4)
    a = assimilate(_truth(), sc)
    b = assimilate(_truth(), sc)
    assert np.array_equal(a.mode_mean, b.mode_mean)
    assert a.extra["forecast_floes"] == 6


def test_inflation_from_colliding_superfloes():
    state = _truth(seed=2, n=30)
    coef, series = inflation_from_superfloes(state, ReductionConfig(6, 6), 300, 20, spinup=50, seed=1)
    assert coef.sigma_force.shape == (6, 2) and coef.sigma_torque.shape == (6,)
    assert np.all(coef.sigma_force >= 0)
    assert coef.sigma_force.max() > 0
    assert len(series.times) == 300
