import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from sliceplan.capacity import (brute_force_capacity_oracle, capacity_sweep, cost_breakdown,
                                optimal_capacity)
from sliceplan.errors import DegenerateError, InfeasibleError, ParameterError, SearchTooLargeError
from sliceplan.model import PriceVector, case_study_topology
from sliceplan.queueing import FlowSolution, mean_delay, solve_traffic_equations
from _instances import random_flow, random_prices
from conftest import PORTFOLIO_1, PORTFOLIO_2

# Frozen from brute_force_capacity_oracle (and cross-checked against SLSQP below).
CASE1_MU = (2191.446713812918, 2382.8934276258356, 442.16306648129563, 2313.7054393855587)
CASE2_MU = (146.33883476483186, 242.67766952966372, 297.4873734152917, 217.67766952966372)
CASE2_P2_MU = (162.5624329071373, 255.50994543633632, 202.97683347822112, 170.31747601931082)


def _flow(lam, q):
    return solve_traffic_equations(case_study_topology(lam, q).traffic)


def _slsqp(flow, prices, T, bounds_floor=None):
    """Generic constrained minimiser on the original problem, over log service-rate gaps."""
    lam = np.array(flow.lambdas)
    p = np.array(prices)
    budget = flow.total_external * T
    g0 = 2 * len(lam) * lam / budget
    lo = None if bounds_floor is None else np.log(bounds_floor * lam / g0)
    scale = float(p @ g0)
    res = minimize(lambda u: p @ (g0 * np.exp(u)) / scale, np.zeros(len(lam)),
                   jac=lambda u: p * g0 * np.exp(u) / scale, method="SLSQP",
                   bounds=None if lo is None else [(l, None) for l in lo],
                   constraints=[{"type": "ineq",
                                 "fun": lambda u: 1.0 - np.sum(lam / (g0 * np.exp(u))) / budget,
                                 "jac": lambda u: lam / (g0 * np.exp(u)) / budget}],
                   options={"ftol": 1e-14, "maxiter": 1000})
    assert res.success, res.message
    return lam + g0 * np.exp(res.x)


def test_single_node_is_price_independent():
    flow = FlowSolution((100.0,), 100.0)
    for price in (0.01, 1.0, 37.0):
        plan = optimal_capacity(flow, (price,), 0.1)
        assert plan.mus[0] == pytest.approx(110.0, rel=1e-12)
    assert brute_force_capacity_oracle(flow, (3.0,), 0.1).mus[0] == pytest.approx(110.0, rel=1e-9)


@pytest.mark.parametrize("lam, q, prices, T, expected", [
    (2000, 0.1, PORTFOLIO_1, 0.010, CASE1_MU),
    (50, 0.5, PORTFOLIO_1, 0.020, CASE2_MU),
    (50, 0.5, PORTFOLIO_2, 0.020, CASE2_P2_MU),
])
def test_case_study_plans(lam, q, prices, T, expected):
    flow = _flow(lam, q)
    plan = optimal_capacity(flow, prices, T)
    oracle = brute_force_capacity_oracle(flow, prices, T)
    assert plan.mus == pytest.approx(expected, rel=1e-12)
    assert plan.mus == pytest.approx(oracle.mus, rel=1e-6)
    assert plan.total_cost == pytest.approx(oracle.total_cost, rel=1e-6)
    assert _slsqp(flow, prices, T) == pytest.approx(plan.mus, rel=1e-5)
    assert plan.achieved_delay == pytest.approx(T, rel=1e-9)
    assert mean_delay(flow, plan.mus).mean_system_delay == pytest.approx(T, rel=1e-9)


def test_case_study_rounded_values():
    assert np.round(optimal_capacity(_flow(2000, 0.1), PORTFOLIO_1, 0.01).mus, 1).tolist() == \
        [2191.4, 2382.9, 442.2, 2313.7]
    assert np.round(optimal_capacity(_flow(50, 0.5), PORTFOLIO_1, 0.02).mus, 1).tolist() == \
        [146.3, 242.7, 297.5, 217.7]


def test_cost_breakdown():
    plan = optimal_capacity(_flow(2000, 0.1), PORTFOLIO_1, 0.010)
    costs = cost_breakdown(plan, PORTFOLIO_1)
    assert np.round(costs, 1).tolist() == [1753.2, 476.6, 22.1, 231.4]
    assert math.fsum(costs) == pytest.approx(plan.total_cost, rel=1e-15)
    assert costs == plan.per_node_cost
    ident = optimal_capacity(FlowSolution((0.5, 1.0, 1.5), 0.5), (1, 1, 1), 100.0)
    fake = type(ident)(mus=(1.0, 2.0, 3.0), total_cost=6.0, per_node_cost=(1.0, 2.0, 3.0),
                       kkt_multiplier=0.0, slack_latency=0.0)
    assert cost_breakdown(fake, (1, 1, 1)) == (1.0, 2.0, 3.0)
    with pytest.raises(ParameterError):
        cost_breakdown(fake, (1, 1))


def test_portfolio_2_lowers_access_cost():
    flow = _flow(50, 0.5)
    c1 = cost_breakdown(optimal_capacity(flow, PORTFOLIO_1, 0.02), PORTFOLIO_1)
    c2 = cost_breakdown(optimal_capacity(flow, PORTFOLIO_2, 0.02), PORTFOLIO_2)
    assert c2[0] < c1[0]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 10.0))
def test_stationarity_and_tightness(seed, T):
    rng = np.random.default_rng(seed)
    flow = random_flow(rng)
    prices = random_prices(rng, flow.size)
    plan = optimal_capacity(flow, prices, T)
    lam, mu = np.array(flow.lambdas), np.array(plan.mus)
    assert np.all(mu > lam)
    np.testing.assert_allclose(plan.kkt_multiplier * lam / (mu - lam) ** 2, prices.prices, rtol=1e-8)
    assert plan.achieved_delay == pytest.approx(T, rel=1e-9)
    assert plan.slack_latency >= -1e-9 * T


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_price_scale_invariance(seed, c):
    rng = np.random.default_rng(seed)
    flow = random_flow(rng)
    prices = random_prices(rng, flow.size)
    a = optimal_capacity(flow, prices, 0.05)
    b = optimal_capacity(flow, prices.scaled(c), 0.05)
    np.testing.assert_allclose(b.mus, a.mus, rtol=1e-12)
    assert b.total_cost == pytest.approx(c * a.total_cost, rel=1e-12)


def test_random_oracle_agreement():
    rng = np.random.default_rng(20240101)
    for _ in range(25):
        flow = random_flow(rng, 4)
        prices = random_prices(rng, 4)
        T = float(rng.uniform(0.001, 1.0))
        a = optimal_capacity(flow, prices, T)
        b = brute_force_capacity_oracle(flow, prices, T)
        np.testing.assert_allclose(a.mus, b.mus, rtol=1e-6)
        assert a.kkt_multiplier == pytest.approx(b.kkt_multiplier, rel=1e-6)


def test_oracle_refuses_large_networks():
    with pytest.raises(SearchTooLargeError):
        brute_force_capacity_oracle(FlowSolution((1.0,) * 7, 1.0), (1.0,) * 7, 1.0)


def test_sweep_monotone_and_bounded():
    flow = _flow(2000, 0.1)
    ts = [0.005, 0.010, 0.020, 0.050, 0.100]
    plans = capacity_sweep(flow, PORTFOLIO_1, ts)
    mus = np.array([p.mus for p in plans])
    assert np.all(np.diff(mus, axis=0) < 0)
    assert np.all(mus > np.array(flow.lambdas))
    costs = [p.total_cost for p in plans]
    assert all(b < a for a, b in zip(costs, costs[1:]))
    assert capacity_sweep(flow, PORTFOLIO_1, ts[1:2])[0].mus == plans[1].mus


def test_sweep_single_node_and_precondition():
    flow = FlowSolution((100.0,), 100.0)
    assert [p.mus[0] for p in capacity_sweep(flow, (1.0,), [0.1, 0.2])] == pytest.approx([110, 105])
    with pytest.raises(ParameterError):
        capacity_sweep(flow, (1.0,), [0.2, 0.1])
    with pytest.raises(ParameterError):
        capacity_sweep(flow, (1.0,), [])


@pytest.mark.parametrize("T", [0.0, -1.0, math.inf])
def test_bad_latency(T):
    with pytest.raises(ParameterError):
        optimal_capacity(FlowSolution((1.0,), 1.0), (1.0,), T)


def test_zero_flow_is_degenerate():
    with pytest.raises(DegenerateError):
        optimal_capacity(FlowSolution((0.0, 0.0), 0.0), (1.0, 1.0), 1.0)


def test_unloaded_node_gets_no_capacity():
    flow = _flow(100, 0.0)
    plan = optimal_capacity(flow, PORTFOLIO_1, 0.02)
    assert plan.mus[2] == 0.0 and plan.per_node_cost[2] == 0.0
    assert plan.achieved_delay == pytest.approx(0.02, rel=1e-12)


def test_headroom_floor_matches_bounded_minimiser():
    flow = _flow(2000, 0.1)
    T = 1.0
    plan = optimal_capacity(flow, PORTFOLIO_1, T, headroom=0.01)
    lam = np.array(flow.lambdas)
    assert np.all(np.array(plan.mus) >= 1.01 * lam * (1 - 1e-12))
    assert plan.slack_latency >= -1e-12
    ref = _slsqp(flow, PORTFOLIO_1, T, bounds_floor=0.01)
    assert plan.total_cost == pytest.approx(float(np.dot(PORTFOLIO_1, ref)), rel=1e-6)


def test_headroom_inactive_when_bound_is_tight():
    flow = _flow(2000, 0.1)
    assert optimal_capacity(flow, PORTFOLIO_1, 0.01, headroom=0.01).mus == \
        optimal_capacity(flow, PORTFOLIO_1, 0.01).mus


def test_fixed_node_is_charged_first():
    flow = _flow(2000, 0.1)
    plan = optimal_capacity(flow, PORTFOLIO_1, 0.01, fixed={3: 3000.0})
    assert plan.mus[3] == 3000.0
    assert plan.achieved_delay == pytest.approx(0.01, rel=1e-9)
    ref = _slsqp(FlowSolution(flow.lambdas[:3], flow.total_external), PORTFOLIO_1[:3],
                 0.01 - 1800 / (1200 * 2000))
    np.testing.assert_allclose(plan.mus[:3], ref, rtol=1e-5)
    with pytest.raises(InfeasibleError):
        optimal_capacity(flow, PORTFOLIO_1, 0.01, fixed={0: 2001.0})
    with pytest.raises(InfeasibleError):
        optimal_capacity(flow, PORTFOLIO_1, 0.01, fixed={0: 1999.0})


def test_price_dimension_mismatch():
    with pytest.raises(ParameterError):
        optimal_capacity(_flow(10, 0.5), (1.0, 1.0), 0.1)
    with pytest.raises(ParameterError):
        optimal_capacity(_flow(10, 0.5), (1.0, 1.0, 0.0, 1.0), 0.1)


def test_plan_accepts_price_vector_or_sequence():
    flow = _flow(10, 0.5)
    assert optimal_capacity(flow, PriceVector(PORTFOLIO_1), 0.5) == optimal_capacity(flow, PORTFOLIO_1, 0.5)
