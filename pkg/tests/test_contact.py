import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_field, random_field
from floesim.contact import (accumulate_loads, cap_tangential, chord_length, contact_torque,
                             detect_contact, minimum_image_displacement, normal_force,
                             tangential_force)
from floesim import _kernels
from floesim.errors import DegenerateContactError
from floesim.floes import Domain, Floe, MaterialParams, benchmark_field

DOMAIN = Domain(50_000.0)
MAT = MaterialParams()


def pair_of(d, r_l=1000.0, r_j=1000.0, **kw):
    a = Floe(1, r_l, 1.0, x=(10_000.0, 10_000.0), v=kw.get("v_l", (0.0, 0.0)), omega=kw.get("w_l", 0.0))
    b = Floe(2, r_j, 1.0, x=(10_000.0 + d, 10_000.0), v=kw.get("v_j", (0.0, 0.0)), omega=kw.get("w_j", 0.0))
    return a, b


def test_minimum_image_displacement_wraps_short_way():
    d = minimum_image_displacement((1000.0, 1000.0), (49_000.0, 1000.0), DOMAIN)
    assert np.allclose(d, [-2000.0, 0.0])


def test_separated_and_touching_floes_are_not_in_contact():
    assert detect_contact(*pair_of(2100.0), DOMAIN) is None
    assert detect_contact(*pair_of(1500.0, 1000.0, 500.0), DOMAIN) is None


def test_overlap_and_chord_example():
    pair = detect_contact(*pair_of(1900.0), DOMAIN)
    assert pair.overlap == pytest.approx(-100.0)
    assert pair.chord == pytest.approx(624.5, abs=0.05)
    # half chord from Pythagoras with the intersection at d/2
    assert pair.chord == pytest.approx(2 * math.sqrt(1000.0**2 - 950.0**2), rel=1e-12)


def test_normal_force_example():
    pair = detect_contact(*pair_of(1900.0), DOMAIN)
    f = normal_force(pair, MAT)
    assert np.hypot(*f) == pytest.approx(7.81e12, rel=1e-3)
    # directed away from j (along -n)
    assert f @ pair.normal < 0


def test_normal_force_vanishes_at_onset():
    mags = [np.hypot(*normal_force(detect_contact(*pair_of(2000.0 - eps), DOMAIN), MAT))
            for eps in (1.0, 1e-3, 1e-6)]
    assert mags[0] > mags[1] > mags[2]
    assert mags[2] < 1e-3 * mags[0]


def test_no_slip_no_tangential_force():
    a, b = pair_of(1900.0, v_l=(0.1, 0.2), v_j=(0.1, 0.2))
    pair = detect_contact(a, b, DOMAIN)
    assert np.all(tangential_force(pair, a, b, MAT) == 0.0)


def test_coulomb_cap_example():
    out = cap_tangential(np.array([0.0, 10.0]), np.array([20.0, 0.0]), 0.2)
    assert np.hypot(*out) == pytest.approx(4.0)
    assert out[0] == 0.0 and out[1] > 0


def test_torque_examples():
    pair = detect_contact(*pair_of(1900.0), DOMAIN)
    assert contact_torque(pair, 5.0 * pair.normal) == 0.0
    tau = contact_torque(pair, 1e6 * pair.tangent)
    assert abs(tau) == pytest.approx(1e9)
    assert contact_torque(pair, -1e6 * pair.tangent) == -tau


def test_coincident_centres_raise_with_ids():
    a = Floe(3, 1000.0, 1.0, x=(5.0, 5.0))
    b = Floe(8, 900.0, 1.0, x=(5.0, 5.0))
    with pytest.raises(DegenerateContactError) as err:
        detect_contact(a, b, DOMAIN)
    assert set(err.value.ids) == {3, 8}
    field = make_field([[5.0, 5.0], [5.0, 5.0], [20_000.0, 0.0]], [1000.0, 900.0, 500.0])
    for method in ("grid", "allpairs", "oracle"):
        with pytest.raises(DegenerateContactError):
            accumulate_loads(field, MAT, method)


def test_isolated_field_has_zero_loads():
    field = make_field([[5000.0, 5000.0], [20_000.0, 20_000.0]], [1000.0, 1000.0])
    loads = accumulate_loads(field, MAT)
    assert not loads.force.any() and not loads.torque.any() and loads.n_contacts == 0


def test_ring_of_equal_spins():
    side = 50_000.0
    centre = np.array([25_000.0, 25_000.0])
    ang = 2 * math.pi * np.arange(3) / 3
    pos = centre + 1100.0 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    field = make_field(pos, [1000.0] * 3, omega=np.full(3, 1e-5), side=side)
    oracle = accumulate_loads(field, MAT, "oracle")
    grid = accumulate_loads(field, MAT, "grid")
    assert oracle.n_contacts == 3
    assert np.allclose(grid.torque, oracle.torque, rtol=1e-12, atol=0)
    # friction opposes the common spin and the ring is rotationally symmetric
    assert np.all(oracle.torque < 0)
    assert np.ptp(oracle.torque) <= 1e-9 * abs(oracle.torque[0])
    assert np.abs(oracle.force.sum(axis=0)).max() <= 1e-9 * np.abs(oracle.force).max()


@given(st.floats(100.0, 3000.0), st.floats(100.0, 3000.0), st.floats(0.0, 1.0),
       st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-1e-4, 1e-4), st.floats(-1e-4, 1e-4),
       st.floats(0.0, 2 * math.pi))
def test_third_law_and_cap(r_l, r_j, frac, vx, vy, w_l, w_j, theta):
    d = max(frac * (r_l + r_j), 1.0)
    x_l = np.array([20_000.0, 20_000.0])
    x_j = x_l + d * np.array([math.cos(theta), math.sin(theta)])
    a = Floe(1, r_l, 1.0, x=tuple(x_l), v=(vx, vy), omega=w_l)
    b = Floe(2, r_j, 1.5, x=tuple(x_j), v=(-vy, vx), omega=w_j)
    p_lj = detect_contact(a, b, DOMAIN)
    p_jl = detect_contact(b, a, DOMAIN)
    assert (p_lj is None) == (p_jl is None)
    if p_lj is None:
        return
    fn_lj, fn_jl = normal_force(p_lj, MAT), normal_force(p_jl, MAT)
    ft_lj, ft_jl = tangential_force(p_lj, a, b, MAT), tangential_force(p_jl, b, a, MAT)
    assert np.array_equal(fn_lj, -fn_jl)
    assert np.array_equal(ft_lj, -ft_jl)
    assert np.hypot(*ft_lj) <= MAT.friction * np.hypot(*fn_lj) * (1 + 1e-12)
    assert 0.0 <= p_lj.chord <= 2 * min(r_l, r_j)


@given(st.floats(0.0, 5000.0), st.floats(100.0, 3000.0), st.floats(100.0, 3000.0))
def test_chord_is_symmetric_and_bounded(d, r_l, r_j):
    c = chord_length(d, r_l, r_j)
    assert c == chord_length(d, r_j, r_l)
    assert 0.0 <= c <= 2 * min(r_l, r_j)


@given(st.integers(0, 2**32 - 1))
def test_grid_matches_oracle(seed):
    field = random_field(np.random.default_rng(seed), n=30)
    grid = accumulate_loads(field, MAT, "grid")
    oracle = accumulate_loads(field, MAT, "oracle")
    scale = max(np.abs(oracle.force).max(), 1.0)
    tscale = max(np.abs(oracle.torque).max(), 1.0)
    assert np.abs(grid.force - oracle.force).max() <= 1e-9 * scale
    assert np.abs(grid.torque - oracle.torque).max() <= 1e-9 * tscale
    assert grid.pair_count == oracle.n_contacts
    assert np.array_equal(grid.pairs, oracle.pairs)


def test_total_force_vanishes(rng):
    field = random_field(rng, n=80)
    loads = accumulate_loads(field, MAT)
    assert loads.n_contacts > 0
    assert np.abs(loads.force.sum(axis=0)).max() < 1e-9 * np.abs(loads.force).max()


def test_thickness_scaling_scales_chord():
    a, b = pair_of(1900.0)
    b = Floe(2, b.r, 0.5, x=b.x)
    plain = detect_contact(a, b, DOMAIN)
    scaled = detect_contact(a, b, DOMAIN, h_ref=1.0)
    assert np.allclose(normal_force(scaled, MAT), 0.5 * normal_force(plain, MAT), rtol=1e-15)


def test_benchmark_field_pair_count_and_finiteness():
    field = benchmark_field(200, seed=0)
    grid = accumulate_loads(field, MAT, "grid")
    oracle = accumulate_loads(field, MAT, "oracle")
    assert np.isfinite(grid.force).all() and np.isfinite(grid.torque).all()
    assert grid.pair_count == oracle.n_contacts


def test_contact_across_periodic_boundary():
    field = make_field([[200.0, 10_000.0], [49_900.0, 10_000.0]], [500.0, 500.0])
    loads = accumulate_loads(field, MAT, "grid")
    oracle = accumulate_loads(field, MAT, "oracle")
    assert loads.n_contacts == 1
    # floe 1 is pushed toward +x, away from its neighbour across the seam
    assert loads.force[0, 0] > 0
    assert np.allclose(loads.force, oracle.force, rtol=1e-12)


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 500.0))
def test_candidate_pairs_cover_every_contact(seed, skin):
    field = random_field(np.random.default_rng(seed), n=60)
    side = field.domain.side
    ncell = _kernels.grid_cells(side, float(field.radius.max()))
    assert ncell > 0
    lists = []
    for cells in (ncell, 0):
        pairs, count, di, _ = _kernels.candidate_pairs(
            field.position, field.radius, side, skin, cells, np.empty(max(cells * cells, 1), np.int64),
            np.empty(len(field), np.int64), np.empty((4, 2), np.int64))
        assert di == -1
        lists.append(pairs[:count].copy())
    grid, brute = lists
    assert np.array_equal(grid, brute)
    keys = grid[:, 0] * len(field) + grid[:, 1]
    assert np.all(np.diff(keys) > 0)
    contacts = {tuple(p) for p in accumulate_loads(field, MAT, "oracle").pairs.tolist()}
    listed = {(int(i), int(j)) for i, j in grid}
    assert contacts and contacts <= listed
