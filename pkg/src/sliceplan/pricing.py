"""Leader-follower pricing between the infrastructure provider and slices.

The provider (leader) posts a price vector; each slice (follower) answers with
its cost-minimal capacity plan and joins only if the plan fits its budget. The
provider keeps the candidate price vector with the highest revenue among
slices that both join and can be embedded together.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .capacity import CapacityPlan, cost_breakdown, optimal_capacity
from .embedding import EXACT_MAX_NODES, EXACT_MAX_REQUESTS, embed_max
from .errors import ParameterError
from .model import Compatibility, PriceVector, SubstrateNetwork, VnRequest
from .queueing import solve_traffic_equations

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PricingOutcome:
    prices: PriceVector
    demands: dict[str, CapacityPlan]
    participants: frozenset[str]
    revenue: float


def best_response(request: VnRequest, prices: PriceVector | Sequence[float], *,
                  sla_latency: float | None = None, headroom: float = 0.0) -> CapacityPlan:
    """The slice's cost-minimal plan at ``prices`` (nodes with a fixed capacity stay pinned)."""
    flow = solve_traffic_equations(request.traffic)
    fixed = {i: vn.fixed_capacity for i, vn in enumerate(request.virtual_nodes)
             if vn.fixed_capacity is not None}
    T = request.sla_latency if sla_latency is None else sla_latency
    return optimal_capacity(flow, prices, T, headroom=headroom, fixed=fixed)


def evaluate_prices(substrate: SubstrateNetwork, requests: Sequence[VnRequest],
                    prices: PriceVector, *, compatibility: Compatibility | None = None,
                    headroom: float = 0.0) -> PricingOutcome:
    demands = {r.id: best_response(r, prices, headroom=headroom) for r in requests}
    willing = [(r, demands[r.id]) for r in requests if demands[r.id].total_cost <= r.budget]
    mode = "exact"
    if len(willing) > EXACT_MAX_REQUESTS or len(substrate.nodes) > EXACT_MAX_NODES:
        log.warning("%d willing slices on %d nodes: filtering participants greedily",
                    len(willing), len(substrate.nodes))
        mode = "greedy"
    _, admitted = embed_max(substrate, willing, mode=mode, compatibility=compatibility)
    participants = frozenset(admitted)
    revenue = math.fsum(demands[i].total_cost for i in sorted(participants))
    return PricingOutcome(prices, demands, participants, revenue)


def price_candidates(price_grid: Sequence[Sequence[float]]) -> list[PriceVector]:
    """Cartesian product of per-node candidate prices, in lexicographic order."""
    if not price_grid or any(len(c) == 0 for c in price_grid):
        raise ParameterError("empty price grid")
    axes = [sorted(set(float(p) for p in c)) for c in price_grid]
    return [PriceVector(v) for v in itertools.product(*axes)]


def best_of(substrate: SubstrateNetwork, requests: Sequence[VnRequest],
            candidates: Sequence[PriceVector], **kwargs) -> tuple[PricingOutcome, list[PricingOutcome]]:
    """Evaluate every candidate; ties go to the lexicographically lowest price vector.

    Returns the winner and all evaluated outcomes in candidate order.
    """
    if not candidates:
        raise ParameterError("empty price grid")
    outcomes = [evaluate_prices(substrate, requests, c, **kwargs) for c in candidates]
    winner = None
    for o in outcomes:
        if (winner is None or o.revenue > winner.revenue
                or (o.revenue == winner.revenue and o.prices.prices < winner.prices.prices)):
            winner = o
    return winner, outcomes


def maximize_revenue(substrate: SubstrateNetwork, requests: Sequence[VnRequest],
                     price_grid: Sequence[Sequence[float]], **kwargs) -> PricingOutcome:
    """Grid search over per-node candidate prices for the revenue-maximising vector."""
    winner, _ = best_of(substrate, requests, price_candidates(price_grid), **kwargs)
    return winner


@dataclass(frozen=True)
class CostRow:
    portfolio_id: int
    vn_id: str
    node_id: str
    sla_latency: float
    mu: float
    price: float
    node_cost: float
    total_cost: float


def price_sweep_report(requests: Sequence[VnRequest], portfolios: Sequence[PriceVector],
                       latencies: Mapping[str, float] | None = None) -> list[CostRow]:
    """Per-node cost of every slice under every portfolio, at each slice's own latency bound."""
    rows = []
    for pid, prices in enumerate(portfolios, start=1):
        for r in requests:
            T = (latencies or {}).get(r.id, r.sla_latency)
            plan = best_response(r, prices, sla_latency=T)
            costs = cost_breakdown(plan, prices)
            for i, name in enumerate(r.node_names):
                rows.append(CostRow(pid, r.id, name, T, plan.mus[i], prices.prices[i],
                                    costs[i], plan.total_cost))
    return rows
