import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sliceplan.capacity import brute_force_capacity_oracle, optimal_capacity
from sliceplan.errors import ParameterError
from sliceplan.model import (NodeKind, PriceVector, SubstrateNetwork, SubstrateNode, TrafficModel,
                             VirtualNode, VnRequest)
from sliceplan.pricing import (best_of, best_response, evaluate_prices, maximize_revenue,
                               price_candidates, price_sweep_report)
from sliceplan.queueing import solve_traffic_equations
from sliceplan.scenario import load_scenario
from _instances import random_flow, random_prices
from _oracle import max_admitted
from conftest import PORTFOLIO_1, PORTFOLIO_2
from test_capacity import CASE1_MU


def one_node(vn_id="solo", lam=100.0, T=0.1, budget=math.inf):
    return VnRequest(vn_id, (VirtualNode(NodeKind.GENERIC),), (), TrafficModel((lam,), ((0.0,),)),
                     sla_latency=T, budget=budget)


def generic(cap=1000.0):
    return SubstrateNetwork((SubstrateNode("g", NodeKind.GENERIC, cap),), ())


@pytest.fixture
def case(scenario_dir):
    sc = load_scenario(scenario_dir / "case_study.yaml")
    return sc.substrate, [sc.request(v.id) for v in sc.vns]


@pytest.mark.parametrize("price", [0.01, 1.0, 37.5])
def test_single_node_demand_is_price_independent(price):
    plan = best_response(one_node(), (price,))
    assert plan.mus[0] == pytest.approx(110.0, rel=1e-12)
    assert plan.total_cost == pytest.approx(110.0 * price, rel=1e-12)


def test_best_response_delegates_to_capacity(video):
    plan = best_response(video, PORTFOLIO_1)
    assert plan.mus == optimal_capacity(solve_traffic_equations(video.traffic), PORTFOLIO_1, 0.010).mus
    assert plan.mus == pytest.approx(CASE1_MU, rel=1e-12)


def test_cheaper_access_lowers_access_cost(monitoring):
    p1 = best_response(monitoring, PORTFOLIO_1)
    p2 = best_response(monitoring, PORTFOLIO_2)
    assert PORTFOLIO_2[0] * p2.mus[0] < PORTFOLIO_1[0] * p1.mus[0]


def test_best_response_keeps_fixed_nodes(video):
    nodes = list(video.virtual_nodes)
    nodes[2] = replace(nodes[2], fixed_capacity=600.0)
    plan = best_response(replace(video, virtual_nodes=tuple(nodes)), PORTFOLIO_1)
    assert plan.mus[2] == 600.0
    assert plan.achieved_delay == pytest.approx(0.010, rel=1e-9)


def test_single_node_game_picks_higher_price():
    out = maximize_revenue(generic(), [one_node(budget=250.0)], [[1.0, 2.0]])
    assert out.prices.prices == (2.0,)
    assert out.revenue == pytest.approx(220.0, rel=1e-12)
    assert out.participants == {"solo"}


def test_budget_below_every_cost_means_no_revenue():
    out = maximize_revenue(generic(), [one_node(budget=50.0)], [[1.0, 2.0]])
    assert out.revenue == 0.0 and not out.participants
    assert out.prices.prices == (1.0,)  # tie at zero goes to the lowest vector


def test_capacity_filters_participants():
    out = evaluate_prices(generic(cap=100.0), [one_node()], PriceVector((1.0,)))
    assert out.participants == frozenset() and out.revenue == 0.0
    assert out.demands["solo"].mus[0] == pytest.approx(110.0)


def test_singleton_grid_is_identity(case):
    sub, reqs = case
    p = PriceVector(PORTFOLIO_2)
    assert maximize_revenue(sub, reqs, [[x] for x in PORTFOLIO_2]) == evaluate_prices(sub, reqs, p)


def test_empty_grid_rejected(case):
    with pytest.raises(ParameterError):
        maximize_revenue(*case, [])
    with pytest.raises(ParameterError):
        maximize_revenue(*case, [[1.0], []])
    with pytest.raises(ParameterError):
        best_of(*case, [])


def test_price_candidates_lexicographic():
    c = price_candidates([[2.0, 1.0], [3.0, 1.0, 3.0]])
    assert [v.prices for v in c] == [(1.0, 1.0), (1.0, 3.0), (2.0, 1.0), (2.0, 3.0)]


def _enumerate(sub, reqs, prices):
    """Revenue by brute force: oracle plans, budget filter, then the largest ILP-feasible subset."""
    plans = {}
    for r in reqs:
        flow = solve_traffic_equations(r.traffic)
        mus = brute_force_capacity_oracle(flow, prices, r.sla_latency).mus
        plans[r.id] = (mus, math.fsum(p * m for p, m in zip(prices, mus)))
    willing = [r for r in reqs if plans[r.id][1] <= r.budget]
    for k in range(len(willing), -1, -1):
        feasible = []
        for subset in itertools.combinations(willing, k):
            pairs = [(r, best_response(r, prices)) for r in subset]
            if max_admitted(sub, pairs) == k:
                feasible.append({r.id for r in subset})
        if feasible:
            return feasible, {i: plans[i][1] for i in plans}
    return [set()], {}


@pytest.mark.parametrize("video_budget, ran_cap", [(math.inf, None), (2000.0, None), (math.inf, 2100.0)])
def test_two_portfolio_game_matches_enumeration(case, video_budget, ran_cap):
    sub, reqs = case
    reqs = [replace(r, budget=video_budget) if r.id == "video" else r for r in reqs]
    if ran_cap is not None:
        sub = SubstrateNetwork(tuple(replace(n, capacity=ran_cap, residual=ran_cap)
                                     if n.kind == NodeKind.RADIO_ACCESS else n for n in sub.nodes),
                               sub.links)
    cands = [PriceVector(PORTFOLIO_1), PriceVector(PORTFOLIO_2)]
    winner, outcomes = best_of(sub, reqs, cands)
    revenues = []
    for cand, out in zip(cands, outcomes):
        sets, costs = _enumerate(sub, reqs, cand.prices)
        assert set(out.participants) in sets
        expected = math.fsum(costs[i] for i in sorted(out.participants))
        assert out.revenue == pytest.approx(expected, rel=1e-6)
        revenues.append(out.revenue)
    assert winner is outcomes[int(np.argmax(revenues))]


def test_budget_flips_the_winner(case):
    sub, reqs = case
    reqs = [replace(r, budget=2000.0) if r.id == "video" else r for r in reqs]
    winner, outcomes = best_of(sub, reqs, [PriceVector(PORTFOLIO_1), PriceVector(PORTFOLIO_2)])
    assert outcomes[0].participants == {"monitoring"}
    assert outcomes[1].participants == {"video", "monitoring"}
    assert winner.prices.prices == PORTFOLIO_2


def test_game_is_reproducible(case):
    grid = [[0.5, 0.8], [0.15, 0.2], [0.05, 0.1], [0.1, 0.15]]
    assert maximize_revenue(*case, grid) == maximize_revenue(*case, grid)


def test_revenue_sums_participant_costs(case):
    out = evaluate_prices(*case, PriceVector(PORTFOLIO_1))
    assert out.revenue == math.fsum(out.demands[i].total_cost for i in sorted(out.participants))


def test_price_sweep_report(video, monitoring):
    rows = price_sweep_report([video, monitoring], [PriceVector(PORTFOLIO_1), PriceVector(PORTFOLIO_2)])
    assert len(rows) == 16
    assert [r.portfolio_id for r in rows[:8]] == [1] * 8
    vid = [r for r in rows if r.portfolio_id == 1 and r.vn_id == "video"]
    assert math.fsum(r.node_cost for r in vid) == pytest.approx(vid[0].total_cost, rel=1e-12)
    assert [r.mu for r in vid] == pytest.approx(CASE1_MU, rel=1e-12)
    assert {r.sla_latency for r in rows if r.vn_id == "monitoring"} == {0.020}
    uniform = price_sweep_report([video], [PriceVector((1.0,) * 4)])
    order_cost = sorted(range(4), key=lambda i: uniform[i].node_cost)
    assert order_cost == sorted(range(4), key=lambda i: uniform[i].mu)


def test_price_sweep_latency_override(video):
    rows = price_sweep_report([video], [PriceVector(PORTFOLIO_1)], {"video": 0.020})
    assert rows[0].sla_latency == 0.020
    assert rows[0].mu < CASE1_MU[0]


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(1e-3, 1e3))
def test_follower_demand_is_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    flow = random_flow(rng)
    p = random_prices(rng, len(flow.lambdas))
    n = len(flow.lambdas)
    req = VnRequest("r", tuple(VirtualNode(NodeKind.GENERIC) for _ in range(n)), (),
                    TrafficModel(tuple(flow.lambdas), tuple((0.0,) * n for _ in range(n))), 1.0)
    a, b = best_response(req, p), best_response(req, p.scaled(c))
    np.testing.assert_allclose(a.mus, b.mus, rtol=1e-12)
    assert b.total_cost == pytest.approx(c * a.total_cost, rel=1e-12)
