import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from floesim.errors import ConfigurationError, ParameterError
from floesim.floes import Domain, Floe, benchmark_field, initialize_field
from floesim.superfloe import (ReductionConfig, bare_truncation, largest_indices, merge_pair,
                               reduce, totals)

DOMAIN = Domain(50_000.0)
RHO = 900.0

floe_strategy = st.builds(
    Floe,
    id=st.just(0),
    r=st.floats(100.0, 8000.0),
    h=st.floats(0.1, 3.5),
    x=st.tuples(st.floats(0.0, 49_999.0), st.floats(0.0, 49_999.0)),
    angle=st.floats(0.0, 6.28),
    v=st.tuples(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0)),
    omega=st.floats(-1e-4, 1e-4),
)


def with_id(f, i):
    return Floe(i, f.r, f.h, f.x, f.angle, f.v, f.omega, f.kind)


def rel(a, b, scale):
    return abs(a - b) / scale


def test_radius_example():
    m = merge_pair(Floe(1, 3000.0, 1.0), Floe(2, 4000.0, 1.0, x=(1.0, 0.0)), DOMAIN)
    assert m.r == pytest.approx(5000.0, rel=1e-15)


def test_velocity_example():
    # unit masses: choose thickness so that m_a = 1 and m_b = 3
    h1 = 1.0 / (RHO * math.pi)
    a = Floe(1, 1.0, h1, v=(2.0, 0.0))
    b = Floe(2, 1.0, 3 * h1, x=(0.5, 0.0), v=(0.0, 4.0))
    m = merge_pair(a, b, DOMAIN)
    assert m.v == pytest.approx((0.5, 3.0), rel=1e-15)


def test_equal_spins_halve():
    a = Floe(1, 1.0, 1.0, omega=2e-5)
    b = Floe(2, 1.0, 1.0, x=(1.5, 0.0), omega=2e-5)
    m = merge_pair(a, b, DOMAIN)
    assert m.omega == pytest.approx(1e-5, rel=1e-15)
    assert m.inertia(RHO) * m.omega == pytest.approx(a.inertia(RHO) * a.omega + b.inertia(RHO) * b.omega,
                                                     rel=1e-15)


def test_thickness_is_area_consistent_by_default():
    a, b = Floe(1, 1.0, 1.0), Floe(2, 1.0, 1.0, x=(1.0, 0.0))
    m = merge_pair(a, b, DOMAIN)
    assert m.h == pytest.approx(1.0, rel=1e-15)
    literal = merge_pair(a, b, DOMAIN, literal_pi_squared=True)
    assert literal.h == pytest.approx(1.0 / math.pi, rel=1e-15)


def test_merge_with_itself_rejected():
    f = Floe(4, 1.0, 1.0)
    with pytest.raises(ParameterError):
        merge_pair(f, f, DOMAIN)


def test_centre_of_mass_across_seam():
    a = Floe(1, 1000.0, 1.0, x=(49_500.0, 100.0))
    b = Floe(2, 1000.0, 1.0, x=(500.0, 100.0))
    m = merge_pair(a, b, DOMAIN)
    assert m.x[0] == pytest.approx(0.0, abs=1e-9) or m.x[0] == pytest.approx(50_000.0, abs=1e-9)


@given(floe_strategy, floe_strategy)
def test_merge_conserves(fa, fb):
    a, b = with_id(fa, 1), with_id(fb, 2)
    m = merge_pair(a, b, DOMAIN, new_id=3)
    ma, mb, mm = a.mass(RHO), b.mass(RHO), m.mass(RHO)
    assert rel(mm, ma + mb, ma + mb) < 1e-12
    assert rel(math.pi * m.r**2, math.pi * (a.r**2 + b.r**2), math.pi * (a.r**2 + b.r**2)) < 1e-12
    p_scale = ma * math.hypot(*a.v) + mb * math.hypot(*b.v) + 1e-300
    for k in range(2):
        assert abs(mm * m.v[k] - (ma * a.v[k] + mb * b.v[k])) <= 1e-12 * p_scale
    l_in = a.inertia(RHO) * a.omega + b.inertia(RHO) * b.omega
    l_scale = abs(a.inertia(RHO) * a.omega) + abs(b.inertia(RHO) * b.omega) + 1e-300
    assert abs(m.inertia(RHO) * m.omega - l_in) <= 1e-12 * l_scale
    assert m.kind == "super" and m.id == 3
    assert 0.0 <= m.x[0] < 50_000.0 and 0.0 <= m.x[1] < 50_000.0


@given(floe_strategy, floe_strategy)
def test_merge_is_commutative(fa, fb):
    a, b = with_id(fa, 1), with_id(fb, 2)
    assert merge_pair(a, b, DOMAIN, 9) == merge_pair(b, a, DOMAIN, 9)


def test_reduce_200_to_60():
    field = benchmark_field(200, seed=0)
    reduced, report = reduce(field, ReductionConfig(30, 30))
    assert len(reduced) == 60
    assert report.before["c"] == pytest.approx(0.78, abs=0.03)
    assert report.after["c"] == pytest.approx(report.before["c"], rel=0.03)
    assert report.after["r_min"] > report.before["r_min"]


def test_reduce_100_to_40_pattern():
    field = benchmark_field(100, seed=0)
    reduced, report = reduce(field, ReductionConfig(20, 20))
    b, a = report.before, report.after
    assert len(reduced) == 40
    assert abs(a["c"] - b["c"]) <= 0.03 * b["c"]
    assert a["r_min"] > b["r_min"]
    assert b["h_min"] <= a["h_min"] and a["h_max"] <= b["h_max"]


def test_reduce_identity_when_already_small():
    field = benchmark_field(40, seed=1)
    reduced, report = reduce(field, ReductionConfig(20, 20))
    assert report.merge_tree == {} and report.deleted_ids == []
    assert sorted(reduced.ids) == sorted(field.ids)
    assert report.before == report.after
    assert all(v == 0.0 for v in report.ledger["difference"].values())


def test_reduce_rejects_infeasible_config():
    with pytest.raises(ConfigurationError):
        reduce(initialize_field(10, seed=0), ReductionConfig(6, 6))
    with pytest.raises(ConfigurationError):
        ReductionConfig(-1, 3)


@given(st.integers(0, 2**31 - 1), st.integers(13, 60), st.integers(0, 6), st.integers(1, 6))
def test_reduce_invariants(seed, n, n_large, n_super):
    field = initialize_field(n, seed=seed, radius_caps=(1000.0, 3000.0))
    rng = np.random.default_rng(seed)
    field.velocity[:] = rng.normal(0, 0.1, (n, 2))
    field.omega[:] = rng.normal(0, 1e-5, n)
    reduced, report = reduce(field, ReductionConfig(n_large, n_super))
    assert len(reduced) <= n_large + n_super
    if not report.deleted_ids:
        assert len(reduced) == n_large + n_super
    # retained large floes are untouched
    for q, i in enumerate(np.sort(largest_indices(field, n_large))):
        assert reduced.floe(q) == field.floe(i)
    mass = totals(field)["mass"]
    assert abs(report.ledger["difference"]["mass"] - report.ledger["deleted"]["mass"]) <= 1e-12 * mass
    # every original floe ends up in exactly one place; merge-tree values list originals only
    originals = set(field.ids.tolist())
    merged = [i for ids in report.merge_tree.values() for i in ids]
    kept = [int(i) for i in reduced.ids if i in originals]
    dropped = [int(i) for i in report.deleted_ids if i in originals]
    assert sorted(merged + kept + dropped) == sorted(originals)
    for i in report.deleted_ids:
        assert i in originals or i in report.merge_tree


def test_reduction_without_deletions_preserves_totals():
    field = initialize_field(30, seed=3, radius_caps=(1000.0, 3000.0), sweeps=0)
    rng = np.random.default_rng(0)
    field.velocity[:] = rng.normal(0, 0.1, (30, 2))
    field.omega[:] = rng.normal(0, 1e-5, 30)
    reduced, report = reduce(field, ReductionConfig(6, 6, isolation_factor=1e6))
    assert report.deleted_ids == []
    full, red = totals(field), totals(reduced)
    m = field.mass
    scale = {"mass": m.sum(), "area": np.sum(np.pi * field.radius**2),
             "momentum_x": np.sum(m * np.abs(field.velocity[:, 0])),
             "momentum_y": np.sum(m * np.abs(field.velocity[:, 1])),
             "angular_momentum": np.sum(field.inertia * np.abs(field.omega))}
    for key in full:
        assert abs(red[key] - full[key]) <= 1e-12 * scale[key]


def test_bare_truncation_keeps_largest():
    field = initialize_field(18, seed=2)
    bare = bare_truncation(field, 6)
    assert np.array_equal(bare.ids, np.arange(1, 7))
    assert np.array_equal(bare.radius, field.radius[:6])


def test_report_serialisation():
    field = benchmark_field(100, seed=2)
    _, report = reduce(field, ReductionConfig(20, 20))
    doc = json.loads(report.to_json())
    assert doc["after"]["n"] == 40
    assert set(doc["ledger"]) == {"full", "reduced", "difference", "deleted"}
    lines = report.table().splitlines()
    assert len(lines) == 2 and lines[1].split()[0] == "100"
