import math

import numpy as np
import pytest

from macalloc.capacity import (PolymatroidRegion, Scenario, contains, dominant_face_vertices,
                               instantaneous_region, rank_tables)
from macalloc.fading import Exponential, FadingModel, PointMass, Uniform, sample
from macalloc.optimize import frank_wolfe, maximize_linear
from macalloc.policy import (RatePolicy, apply_policy, evaluate_policy, greedy_rate,
                             performance_gap, solve_averaged)
from macalloc.utility import Utility

from oracles import face_grid_max

SYM = Scenario([1.0, 1.0], 1.0)
LOG = Utility.log([1.0, 1.0])


def test_greedy_rate_symmetric_example():
    r = greedy_rate(SYM, [1.0, 1.0], LOG)
    np.testing.assert_allclose(r, [0.274653, 0.274653], atol=1e-6)


def test_greedy_rate_zero_gains():
    assert greedy_rate(SYM, [0.0, 0.0], LOG).tolist() == [0.0, 0.0]


def test_greedy_rate_matches_face_grid():
    rng = np.random.default_rng(0)
    s = Scenario([1.0, 2.0], 1.0)
    u = Utility.log([1.0, 3.0], 0.05)
    for _ in range(5):
        h = rng.exponential(1.0, 2)
        region = instantaneous_region(s, h)
        _, best = face_grid_max(u.value, region[[0]], region[[1]], region.total)
        assert u.value(greedy_rate(s, h, u)) >= best - 1e-9


def test_greedy_rates_feasible_and_dominant():
    s = Scenario([1.0, 0.5, 2.0], 1.0)
    u = Utility.alpha_fair([1.0, 2.0, 1.0], 2.0, 0.1)
    gains = sample(FadingModel.independent([Exponential(1.0)] * 3), 300, seed=1).gains
    rates = apply_policy(s, gains, RatePolicy.greedy(u))
    tables = rank_tables(s, gains)
    for k in range(300):
        region = PolymatroidRegion(3, tables[k])
        assert contains(region, rates[k], 1e-9)
        # The per-state optimum is at least as good as any vertex.
        best_vertex = max(u.value(v) for v in dominant_face_vertices(region))
        assert u.value(rates[k]) >= best_vertex - 1e-9


def test_apply_policy_workers_and_chunking_invariant():
    gains = sample(FadingModel.independent([Uniform(0.5, 1.5)] * 2), 20_000, seed=2).gains
    pol = RatePolicy.greedy(Utility.log([1.0, 2.0], 0.1))
    a = apply_policy(SYM, gains, pol, workers=1)
    b = apply_policy(SYM, gains, pol, workers=3)
    assert np.array_equal(a, b)


def test_fixed_policy_is_exact():
    fm = FadingModel.independent([Uniform(0.5, 1.5)] * 2)
    ev = evaluate_policy(SYM, fm, RatePolicy.fixed([0.1, 0.2]), LOG, 500, seed=3)
    assert ev.mean_rates.tolist() == pytest.approx([0.1, 0.2], abs=1e-14)
    assert np.all(ev.rate_se <= 1e-15)
    assert ev.mean_utility == pytest.approx(LOG.value([0.1, 0.2]), rel=1e-14)


def test_linear_greedy_attains_averaged_optimum():
    fm = FadingModel.independent([Exponential(1.0), Exponential(0.5)])
    mu = np.array([1.0, 2.0])
    lin = Utility.linear(mu)
    gap = performance_gap(SYM, fm, lin, 10_000, seed=4)
    # Greedy vertices for mu average to the greedy vertex of the averaged region.
    ev = evaluate_policy(SYM, fm, RatePolicy.linear_greedy(mu), lin, 10_000, seed=4)
    np.testing.assert_allclose(ev.mean_rates, maximize_linear(gap.region, mu), atol=1e-12)
    assert abs(gap.gap) <= 1e-12


def test_policy_validation():
    with pytest.raises(ValueError):
        RatePolicy("random")
    with pytest.raises(ValueError):
        RatePolicy.mixture([(0.5, [1.0, 1.0])])
    with pytest.raises(ValueError):
        RatePolicy.mixture([(1.5, [1.0, 1.0]), (-0.5, [1.0, 2.0])])
    fm = FadingModel.independent([Uniform(0.5, 1.5)] * 2)
    with pytest.raises(ValueError):
        evaluate_policy(SYM, fm, RatePolicy.greedy(LOG), LOG, 99)


def test_witness_needs_vertex_start():
    region = instantaneous_region(SYM, [1.0, 1.0])
    # From an interior start the first step is partial, so the start stays an atom.
    rep = frank_wolfe(lambda mu: maximize_linear(region, mu), LOG, start=[0.27, 0.25],
                      max_iter=1)
    assert 0 < rep.steps[0] < 1
    with pytest.raises(ValueError):
        RatePolicy.optimal_witness(rep)


def test_witness_averages_to_optimum():
    fm = FadingModel.independent([Exponential(1.0), Uniform(0.2, 2.0)])
    u = Utility.log([1.0, 2.0], 0.1)
    res = performance_gap(Scenario([1.0, 2.0], 1.0), fm, u, 5_000, seed=5)
    np.testing.assert_allclose(res.witness.mean_rates, res.optimum, atol=1e-12)


def test_jensen_chain_holds_samplewise():
    fm = FadingModel.independent([Exponential(1.0), Exponential(0.5)])
    u = Utility.log([1.0, 2.0])
    res = performance_gap(Scenario([1.0, 2.0], 1.0), fm, u, 20_000, seed=6)
    values = [v for _, v, _ in res.jensen_chain()]
    assert all(a <= b + 1e-9 for a, b in zip(values, values[1:]))
    assert res.gap >= -1e-9
    assert res.gap_se > 0


def test_gap_vanishes_without_fading():
    fm = FadingModel.independent([PointMass(0.8), PointMass(1.7)])
    res = performance_gap(SYM, fm, Utility.log([1.0, 2.0], 0.1), 200, seed=7)
    assert abs(res.gap) <= 1e-9


def test_gap_nonnegative_uniform_fading():
    fm = FadingModel.independent([Uniform(0.5, 1.5)] * 2)
    u = Utility.log([1.0, 2.0], 0.1)
    res = performance_gap(SYM, fm, u, 20_000, seed=8)
    assert res.gap >= -1e-9
    assert res.u_star >= res.u_greedy - 1e-9
    # Greedy mean lies in the estimated averaged region.
    assert contains(res.region, res.greedy.mean_rates, 1e-9)


def test_solve_averaged_linear_is_vertex():
    region = instantaneous_region(SYM, [1.0, 2.0])
    rep = solve_averaged(region, Utility.linear([1.0, 3.0]))
    np.testing.assert_allclose(rep.rates, maximize_linear(region, [1.0, 3.0]))


def test_evaluate_policy_deterministic():
    fm = FadingModel.independent([Exponential(1.0)] * 2)
    a = evaluate_policy(SYM, fm, RatePolicy.greedy(LOG), LOG, 1000, seed=9)
    b = evaluate_policy(SYM, fm, RatePolicy.greedy(LOG), LOG, 1000, seed=9)
    assert np.array_equal(a.samples, b.samples)
    assert a.mean_utility == b.mean_utility
    assert a.utility_of_mean >= a.mean_utility
    assert math.isfinite(a.utility_of_mean_se)
