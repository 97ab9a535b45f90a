"""Cost-minimal service rates under a mean end-to-end delay bound.

Problem: minimise ``sum p_i mu_i`` subject to ``sum lam_i/(mu_i - lam_i) <= lam T``.
With linear cost the bound is active, and stationarity of the Lagrangian gives
``mu_i - lam_i = sqrt(alpha lam_i / p_i)``. Substituting into the active bound:

    mu_i = lam_i + (sum_j sqrt(p_j lam_j)) * sqrt(lam_i / p_i) / (lam T)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateError, InfeasibleError, ParameterError, SearchTooLargeError
from .model import PriceVector
from .queueing import FlowSolution

ORACLE_MAX_NODES = 6


@dataclass(frozen=True)
class CapacityPlan:
    mus: tuple[float, ...]
    total_cost: float
    per_node_cost: tuple[float, ...]
    kkt_multiplier: float
    slack_latency: float
    lambdas: tuple[float, ...] = ()
    sla_latency: float = math.nan

    @property
    def size(self) -> int:
        return len(self.mus)

    @property
    def achieved_delay(self) -> float:
        return self.sla_latency - self.slack_latency


def _prices(prices, n: int) -> np.ndarray:
    if not isinstance(prices, PriceVector):
        prices = PriceVector(tuple(prices))
    if len(prices) != n:
        raise ParameterError(f"expected {n} prices, got {len(prices)}")
    return np.asarray(prices.prices, dtype=float)


def _delay_sum(lam: np.ndarray, mu: np.ndarray) -> float:
    loaded = lam > 0
    gap = mu[loaded] - lam[loaded]
    if np.any(gap <= 0):
        return math.inf
    return math.fsum((lam[loaded] / gap).tolist())


def _build_plan(flow: FlowSolution, p: np.ndarray, T: float, mu: np.ndarray,
                alpha: float) -> CapacityPlan:
    per_node = p * mu
    achieved = _delay_sum(flow.as_array(), mu) / flow.total_external
    return CapacityPlan(
        mus=tuple(mu.tolist()),
        total_cost=math.fsum(per_node.tolist()),
        per_node_cost=tuple(per_node.tolist()),
        kkt_multiplier=float(alpha),
        slack_latency=T - achieved,
        lambdas=flow.lambdas,
        sla_latency=T,
    )


def _check_inputs(flow: FlowSolution, sla_latency: float) -> np.ndarray:
    if not (sla_latency > 0) or not math.isfinite(sla_latency):
        raise ParameterError(f"latency bound must be positive and finite, got {sla_latency}")
    lam = flow.as_array()
    if not np.any(lam > 0) or not (flow.total_external > 0):
        raise DegenerateError("no traffic reaches any node")
    return lam


def optimal_capacity(flow: FlowSolution, prices, sla_latency: float, *,
                     headroom: float = 0.0,
                     fixed: Mapping[int, float] | None = None) -> CapacityPlan:
    """Closed-form cost-minimal plan meeting the delay bound with equality.

    ``fixed`` pins the rate of selected nodes; their delay is charged against the
    budget first. ``headroom`` enforces ``mu_i >= (1 + headroom) lam_i``; nodes
    hitting that floor are pinned and the rest re-solved until the set settles.
    Unloaded nodes get rate 0 unless pinned.
    """
    lam = _check_inputs(flow, sla_latency)
    n = flow.size
    p = _prices(prices, n)
    if headroom < 0:
        raise ParameterError("headroom must be non-negative")
    budget = flow.total_external * sla_latency

    mu = np.zeros(n)
    pinned: dict[int, float] = {}
    for i, m in (fixed or {}).items():
        if not 0 <= i < n:
            raise ParameterError(f"fixed node index {i} out of range")
        if lam[i] > 0 and not m > lam[i]:
            raise InfeasibleError(f"fixed rate {m} at node {i} cannot carry {lam[i]}")
        pinned[i] = float(m)

    while True:
        spent = math.fsum(lam[i] / (m - lam[i]) for i, m in pinned.items() if lam[i] > 0)
        remaining = budget - spent
        free = [i for i in range(n) if lam[i] > 0 and i not in pinned]
        if not free:
            if remaining < 0:
                raise InfeasibleError("pinned rates alone exceed the latency bound")
            alpha = 0.0
            break
        if not remaining > 0:
            raise InfeasibleError("pinned rates leave no latency budget for the other nodes")
        scale = math.fsum(math.sqrt(p[i] * lam[i]) for i in free)
        for i in free:
            mu[i] = lam[i] + scale * math.sqrt(lam[i] / p[i]) / remaining
        alpha = (scale / remaining) ** 2
        floored = [i for i in free if headroom > 0 and mu[i] < (1 + headroom) * lam[i]]
        if not floored:
            break
        for i in floored:
            pinned[i] = (1 + headroom) * lam[i]

    for i, m in pinned.items():
        mu[i] = m
    return _build_plan(flow, p, sla_latency, mu, alpha)


def capacity_sweep(flow: FlowSolution, prices, t_values: Sequence[float],
                   **kwargs) -> list[CapacityPlan]:
    """One optimal plan per latency bound; bounds must be positive and strictly increasing."""
    ts = [float(t) for t in t_values]
    if not ts:
        raise ParameterError("empty latency list")
    if any(not t > 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        raise ParameterError("latency bounds must be positive and strictly increasing")
    return [optimal_capacity(flow, prices, t, **kwargs) for t in ts]


def cost_breakdown(plan: CapacityPlan, prices) -> tuple[float, ...]:
    p = _prices(prices, plan.size)
    return tuple((p * np.asarray(plan.mus)).tolist())


def brute_force_capacity_oracle(flow: FlowSolution, prices, sla_latency: float,
                                grid_resolution: int = 2000) -> CapacityPlan:
    """Numerical minimum of the cost along the stationarity curve.

    Every point ``mu_i(a) = lam_i + sqrt(a lam_i / p_i)`` satisfies the KKT
    stationarity condition for multiplier ``a``. Cost rises with ``a`` and delay
    falls, so the optimum is the smallest feasible ``a``. A log grid over
    ``a`` brackets it; bisection on the grid cell refines it.
    """
    lam = _check_inputs(flow, sla_latency)
    n = flow.size
    if n > ORACLE_MAX_NODES:
        raise SearchTooLargeError(f"oracle handles at most {ORACLE_MAX_NODES} nodes, got {n}")
    if grid_resolution < 2:
        raise ParameterError("grid resolution must be at least 2")
    p = _prices(prices, n)
    budget = flow.total_external * sla_latency
    loaded = lam > 0

    def rates(a: float) -> np.ndarray:
        mu = np.zeros(n)
        mu[loaded] = lam[loaded] + np.sqrt(a * lam[loaded] / p[loaded])
        return mu

    def feasible(a: float) -> bool:
        return _delay_sum(lam, rates(a)) <= budget

    grid = np.logspace(-40, 40, grid_resolution)
    costs = np.array([float(p @ rates(a)) for a in grid])
    ok = np.array([feasible(a) for a in grid])
    if not ok.any() or ok[0]:
        raise InfeasibleError("multiplier grid does not bracket the optimum")
    k = int(np.argmin(np.where(ok, costs, np.inf)))
    lo, hi = math.log(grid[k - 1]), math.log(grid[k])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if feasible(math.exp(mid)):
            hi = mid
        else:
            lo = mid
    alpha = math.exp(hi)
    return _build_plan(flow, p, sla_latency, rates(alpha), alpha)
