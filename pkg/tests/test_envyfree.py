import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clinchbench import oracle
from clinchbench.core import (
    Outcome,
    feasible,
    make_instance,
    outcome_revenue,
    outcome_welfare,
)
from clinchbench.envyfree import (
    efo2_revenue,
    efo_revenue,
    efo_welfare,
    iron,
    is_envy_free,
    lagrangian_virtuals_revenue,
    lagrangian_virtuals_welfare,
    max_payments,
    min_payments,
    revenue_curve,
    welfare_curve,
)
from conftest import draw_instance

REL = 1e-6


# ----------------------------------------------------------------------
# Envy-free payment band
# ----------------------------------------------------------------------


def test_payment_band_fixture():
    values = (3.0, 2.0, 1.0)
    alloc = (0.6, 0.3, 0.1)
    assert min_payments(values, alloc) == pytest.approx((0.8, 0.2, 0.0))
    assert max_payments(values, alloc) == pytest.approx((1.4, 0.5, 0.1))


def test_band_extremes_are_envy_free():
    values = (3.0, 2.0, 1.0)
    alloc = (0.6, 0.3, 0.1)
    assert is_envy_free(values, Outcome(alloc, min_payments(values, alloc)))
    assert is_envy_free(values, Outcome(alloc, max_payments(values, alloc)))


def test_overcharging_breaks_envy_freeness():
    values = (3.0, 2.0, 1.0)
    alloc = (0.6, 0.3, 0.1)
    pay = list(max_payments(values, alloc))
    pay[0] += 1e-3
    assert not is_envy_free(values, Outcome(alloc, tuple(pay)))


def test_nonmonotone_allocation_is_never_envy_free():
    assert not is_envy_free((3.0, 2.0), Outcome((0.3, 0.6), (0.0, 0.0)))


def test_zero_outcome_is_envy_free():
    assert is_envy_free((3.0, 2.0), Outcome((0.0, 0.0), (0.0, 0.0)))


# ----------------------------------------------------------------------
# Lagrangian virtuals and curves
# ----------------------------------------------------------------------


def test_welfare_virtuals_fixture():
    assert lagrangian_virtuals_welfare((4.0, 3.0, 2.0), 0.0) == (
        pytest.approx((4.0, 3.0, 2.0)))
    assert lagrangian_virtuals_welfare((4.0, 3.0, 2.0), 1.0) == (
        pytest.approx((1.0, 4.0, 4.0)))


def test_revenue_virtuals_fixture():
    assert lagrangian_virtuals_revenue((4.0, 3.0, 2.0), 0.0) == (
        pytest.approx((4.0, 2.0, 0.0)))


def test_curve_fixtures():
    assert welfare_curve((3.0, 2.0, 1.0), 1.0) == pytest.approx(
        (-3.0, 1.0, 4.0, 6.0))
    assert revenue_curve((3.0, 2.0, 1.0), 1.0) == pytest.approx(
        (0.0, 0.0, 2.0, 2.0))


def test_virtual_prefix_sums_trace_the_curves():
    rng = np.random.default_rng(3)
    for _ in range(40):
        n = int(rng.integers(1, 9))
        values = tuple(np.sort(rng.uniform(0.0, 4.0, n))[::-1])
        lam = float(rng.uniform(0.0, 5.0))
        wsum = np.cumsum(lagrangian_virtuals_welfare(values, lam))
        assert wsum == pytest.approx(welfare_curve(values, lam)[1:], abs=1e-9)
        rsum = np.cumsum(lagrangian_virtuals_revenue(values, lam))
        assert rsum == pytest.approx(revenue_curve(values, lam)[1:], abs=1e-9)


# ----------------------------------------------------------------------
# Ironing
# ----------------------------------------------------------------------


def test_iron_two_point_hull():
    res = iron((0.0, 1.0, 0.5, 1.5))
    assert res.ironed_curve == pytest.approx((0.0, 1.0, 1.25, 1.5))
    assert res.intervals == ((2, 3),)
    assert res.vertices == (0, 1, 3)


def test_iron_concave_curve_is_untouched():
    curve = (0.0, 2.0, 3.0, 3.5)
    res = iron(curve)
    assert res.ironed_curve == pytest.approx(curve)
    assert res.intervals == ()


def test_iron_convex_curve_is_one_chord():
    res = iron((0.0, 0.1, 0.5, 3.0))
    assert res.intervals == ((1, 3),)
    assert res.ironed_curve == pytest.approx((0.0, 1.0, 2.0, 3.0))


def _brute_envelope(heights):
    # Least concave majorant of (i, max(h_i, 0)) by chord enumeration.
    clamped = [max(h, 0.0) for h in heights]
    m = len(clamped)
    env = list(clamped)
    for j in range(m):
        for a in range(j + 1):
            for b in range(j, m):
                if a == b:
                    continue
                chord = clamped[a] + (clamped[b] - clamped[a]) * (j - a) / (b - a)
                env[j] = max(env[j], chord)
    return env


def test_iron_matches_brute_force_envelope():
    rng = np.random.default_rng(11)
    for _ in range(120):
        n = int(rng.integers(1, 10))
        curve = tuple(rng.uniform(-2.0, 4.0, n + 1))
        res = iron(curve)
        assert res.ironed_curve == pytest.approx(_brute_envelope(curve),
                                                 abs=1e-10)
        bar = res.ironed_curve
        slopes = [b - a for a, b in zip(bar, bar[1:])]
        assert all(s1 >= s2 - 1e-9 for s1, s2 in zip(slopes, slopes[1:]))
        assert res.ironed_virtual == pytest.approx(slopes)
        for lo, hi in res.intervals:
            a = lo - 1
            assert hi - a >= 2
            assert bar[a] == pytest.approx(max(curve[a], 0.0))
            assert bar[hi] == pytest.approx(max(curve[hi], 0.0))
            for t in range(lo, hi):
                assert bar[t] > max(curve[t], 0.0) - 1e-12


# ----------------------------------------------------------------------
# Benchmarks
# ----------------------------------------------------------------------


def test_worked_welfare_benchmark(worked):
    res = efo_welfare(worked)
    assert res.objective == pytest.approx(6.5, rel=REL)
    assert res.outcome.alloc == pytest.approx((5 / 6, 5 / 6, 1 / 3), rel=1e-9)
    assert res.outcome.pay[0] == pytest.approx(1.0, rel=1e-6)
    assert res.multiplier == pytest.approx(0.5, abs=1e-6)
    assert res.mix == pytest.approx(0.5, abs=1e-6)
    assert is_envy_free(worked.values, res.outcome, tol=1e-7)
    assert feasible(worked.env, res.outcome.alloc, tol=1e-7)


def test_worked_revenue_benchmark(worked):
    res = efo_revenue(worked)
    assert res.objective == pytest.approx(3.0, rel=REL)
    assert res.multiplier == pytest.approx(3.0, abs=1e-6)
    assert res.mix == pytest.approx(0.75, abs=1e-6)
    assert max(res.outcome.pay) <= worked.budget + 1e-8
    assert is_envy_free(worked.values, res.outcome, tol=1e-7)


def test_value_tie_pair():
    inst = make_instance((3.0, 3.0), (1.0, 0.0), 1.0)
    w = efo_welfare(inst)
    assert w.objective == pytest.approx(3.0, rel=REL)
    r = efo_revenue(inst)
    assert r.objective == pytest.approx(2.0, rel=REL)
    assert r.outcome.alloc == pytest.approx((1 / 3, 1 / 3), rel=1e-7)
    assert r.outcome.pay == pytest.approx((1.0, 1.0), rel=1e-7)


def test_single_agent():
    inst = make_instance((10.0,), (1.0,), 3.0)
    assert efo_welfare(inst).objective == pytest.approx(10.0)
    assert efo_welfare(inst).outcome.pay == pytest.approx((0.0,), abs=1e-9)
    r = efo_revenue(inst)
    assert r.objective == pytest.approx(3.0)
    assert r.outcome.alloc == pytest.approx((0.3,), rel=1e-9)


def test_single_item_unlimited_budget_revenue():
    inst = make_instance((3.0, 2.0), (1.0, 0.0), float("inf"))
    res = efo_revenue(inst)
    assert res.objective == pytest.approx(3.0)
    assert res.outcome.alloc == pytest.approx((1.0, 0.0), abs=1e-9)


def test_infinite_budget_welfare_is_greedy(worked):
    inst = make_instance(worked.values, worked.weights, float("inf"))
    res = efo_welfare(inst)
    assert res.objective == pytest.approx(7.0)
    assert res.outcome.alloc == pytest.approx(inst.weights)
    assert res.multiplier == 0.0


def test_zero_budget_gives_zero_outcome(worked):
    inst = make_instance(worked.values, worked.weights, 0.0)
    for bench in (efo_welfare, efo_revenue):
        res = bench(inst)
        assert res.objective == 0.0
        assert res.outcome.alloc == (0.0, 0.0, 0.0)
        assert res.outcome.pay == (0.0, 0.0, 0.0)


def test_empty_instance():
    inst = make_instance((), (), 1.0)
    assert efo_welfare(inst).objective == 0.0
    assert efo_revenue(inst).outcome.alloc == ()


def test_efo2_fixture():
    inst = make_instance((100.0, 1.0), (1.0, 0.0), float("inf"))
    assert efo2_revenue(inst) == pytest.approx(1.0)


def test_efo2_matches_manual_substitution():
    inst = make_instance((5.0, 3.0, 2.0), (1.0, 0.5, 0.0), 1.5)
    twin = make_instance((3.0, 3.0, 2.0), (1.0, 0.5, 0.0), 1.5)
    assert efo2_revenue(inst) == pytest.approx(efo_revenue(twin).objective,
                                               rel=1e-9)


def test_efo2_needs_two_agents():
    with pytest.raises(ValueError):
        efo2_revenue(make_instance((1.0,), (1.0,), 1.0))


def test_matches_lp_oracle_on_random_instances():
    rng = np.random.default_rng(17)
    for _ in range(60):
        inst = draw_instance(rng, 6)
        w = efo_welfare(inst).objective
        lw = oracle.lp_efo_welfare(inst)
        assert w == pytest.approx(lw, rel=REL, abs=1e-8), inst
        r = efo_revenue(inst).objective
        lr = oracle.lp_efo_revenue(inst)
        assert r == pytest.approx(lr, rel=REL, abs=1e-8), inst


@st.composite
def small_instances(draw):
    n = draw(st.integers(1, 6))
    values = sorted(
        draw(st.lists(st.floats(0.1, 5.0), min_size=n, max_size=n)),
        reverse=True,
    )
    k = draw(st.integers(0, n))
    weights = sorted(
        draw(st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k)),
        reverse=True,
    )
    budget = draw(st.one_of(st.floats(0.05, 3.0), st.just(float("inf"))))
    return make_instance(values, weights, budget)


@settings(max_examples=60, deadline=None)
@given(small_instances())
def test_benchmark_outcomes_are_valid(inst):
    """Both benchmarks must emit feasible, envy-free, budget-capped outcomes
    whose recorded objective matches the outcome they return."""
    w = efo_welfare(inst)
    assert feasible(inst.env, w.outcome.alloc, tol=1e-7)
    assert is_envy_free(inst.values, w.outcome, tol=1e-6)
    assert w.objective == pytest.approx(outcome_welfare(inst, w.outcome),
                                        rel=1e-9, abs=1e-9)
    r = efo_revenue(inst)
    assert feasible(inst.env, r.outcome.alloc, tol=1e-7)
    assert is_envy_free(inst.values, r.outcome, tol=1e-6)
    assert r.objective == pytest.approx(outcome_revenue(r.outcome),
                                        rel=1e-9, abs=1e-9)
    if math.isfinite(inst.budget):
        scale = 1e-8 * (1.0 + inst.budget)
        assert all(p <= inst.budget + scale for p in w.outcome.pay)
        assert all(p <= inst.budget + scale for p in r.outcome.pay)
