import itertools
import json
import math

import numpy as np
import pytest
from scipy.integrate import quad
from hypothesis import given
from hypothesis import strategies as st

from macalloc.capacity import (PolymatroidRegion, Scenario, averaged_region, awgn_capacity,
                               contains, dominant_face_vertices, expand, hausdorff_distance,
                               hausdorff_distances, instantaneous_region, parse_subset_key,
                               rank_tables, subset_key)
from macalloc.fading import FadingModel, PointMass, Uniform

from oracles import rank_by_loops, table_to_dict

SYM = Scenario([1.0, 1.0], 1.0)


def sym_region():
    return instantaneous_region(SYM, [1.0, 1.0])


@pytest.mark.parametrize("p, n, expected", [
    (0.0, 1.0, 0.0),
    (1.0, 1.0, 0.5 * math.log(2)),
    (3.0, 1.0, math.log(2)),
])
def test_awgn_capacity_values(p, n, expected):
    assert awgn_capacity(p, n) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("p, n", [(1.0, 0.0), (1.0, -1.0), (-0.1, 1.0)])
def test_awgn_capacity_domain(p, n):
    with pytest.raises(ValueError):
        awgn_capacity(p, n)


def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario([1.0, -1.0], 1.0)
    with pytest.raises(ValueError):
        Scenario([1.0], 0.0)
    with pytest.raises(ValueError):
        Scenario(np.ones(17), 1.0)
    assert Scenario([2.0, 4.0], 2.0).snr.tolist() == [1.0, 2.0]


def test_instantaneous_symmetric_example():
    r = sym_region()
    assert r[[0]] == pytest.approx(0.346574, abs=1e-6)
    assert r[[1]] == pytest.approx(0.346574, abs=1e-6)
    assert r[[0, 1]] == pytest.approx(0.549306, abs=1e-6)


def test_zero_gains_give_zero_region():
    assert np.all(instantaneous_region(SYM, [0.0, 0.0]).rank == 0)


def test_instantaneous_matches_loops():
    rng = np.random.default_rng(0)
    p = rng.uniform(0.1, 2, 4)
    s = Scenario(p, 0.7)
    h = rng.exponential(1, 4)
    ref = rank_by_loops(p, 0.7, h)
    got = table_to_dict(instantaneous_region(s, h).rank, 4)
    for key in ref:
        assert got[key] == pytest.approx(ref[key], rel=1e-13)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        instantaneous_region(SYM, [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        rank_tables(SYM, [1.0, -1.0])


def test_submodularity_exhaustive_m3():
    rng = np.random.default_rng(1)
    s = Scenario(rng.uniform(0.5, 2, 3), 1.0)
    f = table_to_dict(instantaneous_region(s, rng.exponential(1, 3)).rank, 3)
    f[frozenset()] = 0.0
    subsets = list(f)
    for a, b in itertools.product(subsets, repeat=2):
        assert f[a] + f[b] >= f[a | b] + f[a & b] - 1e-14
        if a <= b:
            assert f[a] <= f[b] + 1e-14


def test_violations_detects_bad_tables():
    assert PolymatroidRegion(2, [0, 1, 1, 3]).violations() == ["submodular"]
    assert "monotone" in PolymatroidRegion(2, [0, 1, 1, 0.5]).violations()
    with pytest.raises(ValueError):
        PolymatroidRegion(2, [0, 1, 1, 3]).validate()
    with pytest.raises(ValueError):
        PolymatroidRegion(2, [0, 1, 1])


def test_averaged_region_point_mass_equals_instantaneous():
    fm = FadingModel.independent([PointMass(0.7), PointMass(1.3)])
    avg, se = averaged_region(SYM, fm, 50, seed=3)
    inst = instantaneous_region(SYM, [0.7, 1.3])
    np.testing.assert_allclose(avg.rank, inst.rank, rtol=1e-14)
    assert np.all(se <= 1e-15)


def test_averaged_region_deterministic():
    fm = FadingModel.independent([Uniform(0.5, 1.5)] * 2)
    a, _ = averaged_region(SYM, fm, 1000, seed=9)
    b, _ = averaged_region(SYM, fm, 1000, seed=9)
    assert np.array_equal(a.rank, b.rank)


def test_averaged_region_uniform_integral():
    s = Scenario([1.0], 1.0)
    fm = FadingModel.independent([Uniform(1.0, 2.0)])
    region, se = averaged_region(s, fm, 100_000, seed=0)
    exact = 0.5 * (3 * math.log(3) - 2 * math.log(2) - 1)
    assert exact == pytest.approx(quad(lambda h: 0.5 * math.log1p(h), 1, 2)[0], rel=1e-12)
    assert abs(region.total - exact) <= 3 * se[1]


def test_averaged_region_workers_invariant():
    fm = FadingModel.independent([Uniform(0.5, 1.5)] * 2)
    a, _ = averaged_region(SYM, fm, 10_000, seed=2, workers=1)
    b, _ = averaged_region(SYM, fm, 10_000, seed=2, workers=3)
    assert np.array_equal(a.rank, b.rank)


def test_averaged_region_rejects_zero_samples():
    fm = FadingModel.independent([Uniform(0.5, 1.5)] * 2)
    with pytest.raises(ValueError):
        averaged_region(SYM, fm, 0)


@pytest.mark.parametrize("rates, expected", [
    ([0.0, 0.0], True),
    ([0.3, 0.2], True),
    ([0.35, 0.25], False),
    ([0.4, 0.0], False),
    ([-0.01, 0.0], False),
])
def test_contains_examples(rates, expected):
    assert contains(sym_region(), rates, 0.0) is expected


def test_contains_slack_and_errors():
    r = sym_region()
    assert contains(r, [0.35, 0.2], slack=0.01)
    with pytest.raises(ValueError):
        contains(r, [0.1, 0.1, 0.1])
    with pytest.raises(ValueError):
        contains(r, [0.1, 0.1], slack=-1)


def test_dominant_face_vertices_symmetric():
    verts = dominant_face_vertices(sym_region())
    got = sorted(tuple(np.round(v, 6)) for v in verts)
    assert got == [(0.202733, 0.346574), (0.346574, 0.202733)]


def test_dominant_face_vertices_properties():
    rng = np.random.default_rng(4)
    for m in (1, 2, 3, 4):
        s = Scenario(rng.uniform(0.5, 2, m), 1.0)
        region = instantaneous_region(s, rng.exponential(1, m))
        verts = dominant_face_vertices(region)
        assert len(verts) == math.factorial(m)
        for v in verts:
            assert contains(region, v, 1e-12)
            assert v.sum() == pytest.approx(region.total, abs=1e-12)


def test_dominant_face_single_user_and_limit():
    r = instantaneous_region(Scenario([1.0], 1.0), [1.0])
    assert len(dominant_face_vertices(r)) == 1
    with pytest.raises(ValueError):
        dominant_face_vertices(PolymatroidRegion(9, np.zeros(1 << 9)))


def test_dominant_face_duplicates_removed():
    # A modular table has a single vertex.
    r = PolymatroidRegion(2, [0.0, 1.0, 2.0, 3.0])
    assert len(dominant_face_vertices(r)) == 1


def test_expand():
    r = sym_region()
    assert np.array_equal(expand(r, 0.0).rank, r.rank)
    e = expand(r, 0.1)
    np.testing.assert_allclose(e.rank[1:], r.rank[1:] + 0.1, rtol=0, atol=1e-15)
    assert e.rank[0] == 0.0
    assert e.violations() == []
    for v in dominant_face_vertices(r):
        assert contains(e, v, 0.0)
    with pytest.raises(ValueError):
        expand(r, -0.1)


def test_hausdorff_distance():
    r = sym_region()
    assert hausdorff_distance(r, r) == 0.0
    assert hausdorff_distance(r, expand(r, 0.25)) == pytest.approx(0.25, abs=1e-15)
    rng = np.random.default_rng(5)
    a = PolymatroidRegion(3, np.r_[0, rng.random(7)])
    b = PolymatroidRegion(3, np.r_[0, rng.random(7)])
    assert hausdorff_distance(a, b) == max(abs(a.rank[k] - b.rank[k]) for k in range(1, 8))
    with pytest.raises(ValueError):
        hausdorff_distance(a, r)


def test_hausdorff_distances_batch():
    rng = np.random.default_rng(6)
    tables = np.c_[np.zeros(20), rng.random((20, 3))]
    ref = np.r_[0, rng.random(3)]
    d = hausdorff_distances(tables, ref)
    for k in range(20):
        assert d[k] == hausdorff_distance(PolymatroidRegion(2, tables[k]), PolymatroidRegion(2, ref))


def test_subset_keys():
    assert subset_key(0b101) == "1,3"
    assert parse_subset_key("1,3") == 0b101
    with pytest.raises(ValueError):
        parse_subset_key("0")


def test_json_round_trip():
    r = instantaneous_region(Scenario([1.0, 2.0, 0.5], 1.0), [0.4, 1.0, 2.0])
    data = json.loads(json.dumps(r.to_dict()))
    assert data["M"] == 3
    assert set(data["rank"]) == {"1", "2", "3", "1,2", "1,3", "2,3", "1,2,3"}
    back = PolymatroidRegion.from_dict(data)
    assert np.array_equal(back.rank, r.rank)


ranks = st.lists(st.floats(0, 5, allow_nan=False), min_size=7, max_size=7)


@given(ranks, ranks, ranks)
def test_hausdorff_is_metric(x, y, z):
    a, b, c = (PolymatroidRegion(3, [0.0, *v]) for v in (x, y, z))
    assert hausdorff_distance(a, a) == 0
    assert hausdorff_distance(a, b) == hausdorff_distance(b, a)
    assert hausdorff_distance(a, c) <= hausdorff_distance(a, b) + hausdorff_distance(b, c) + 1e-12


@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_instantaneous_regions_are_polymatroids(m, seed):
    rng = np.random.default_rng(seed)
    s = Scenario(rng.uniform(0, 3, m), rng.uniform(0.1, 2))
    assert instantaneous_region(s, rng.exponential(1, m)).violations() == []


@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_averaged_regions_are_polymatroids(m, seed):
    rng = np.random.default_rng(seed)
    s = Scenario(rng.uniform(0, 3, m), 1.0)
    fm = FadingModel.independent([Uniform(0.1, 2.0)] * m)
    region, _ = averaged_region(s, fm, 200, seed=seed)
    assert region.violations() == []
