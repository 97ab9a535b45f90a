"""Seeded random instance generators shared by the test modules."""

from __future__ import annotations

import math

import numpy as np

from sliceplan.capacity import optimal_capacity
from sliceplan.model import (NodeKind, PriceVector, SubstrateLink, SubstrateNetwork, SubstrateNode,
                             TrafficModel, VirtualNode, VnRequest)
from sliceplan.queueing import FlowSolution, solve_traffic_equations

KINDS = (NodeKind.RADIO_ACCESS, NodeKind.SERVING_GATEWAY, NodeKind.PACKET_GATEWAY)


def random_flow(rng: np.random.Generator, n: int | None = None) -> FlowSolution:
    """Random open network with every node loaded (rows keep an exit)."""
    n = int(rng.integers(2, 7)) if n is None else n
    while True:
        gamma = rng.uniform(0.0, 100.0, n) * (rng.random(n) < 0.7)
        gamma[int(rng.integers(n))] += rng.uniform(1.0, 100.0)
        R = rng.random((n, n)) * (rng.random((n, n)) < 0.5)
        np.fill_diagonal(R, 0.0)
        sums = R.sum(axis=1, keepdims=True)
        R = np.where(sums > 0, R / np.maximum(sums, 1e-300) * rng.uniform(0.2, 0.95, (n, 1)), 0.0)
        flow = solve_traffic_equations(TrafficModel(tuple(gamma), tuple(map(tuple, R))))
        if min(flow.lambdas) > 1e-6:
            return flow


def random_prices(rng: np.random.Generator, n: int) -> PriceVector:
    return PriceVector(tuple(rng.uniform(0.05, 5.0, n)))


def random_substrate(rng: np.random.Generator, n: int | None = None) -> SubstrateNetwork:
    n = int(rng.integers(3, 11)) if n is None else n
    ids = [f"s{i}" for i in range(n)]
    nodes = [SubstrateNode(ids[i], KINDS[int(rng.integers(len(KINDS)))],
                           float(rng.integers(5, 31))) for i in range(n)]
    edges = set()
    for i in range(1, n):
        edges.add(tuple(sorted((ids[i], ids[int(rng.integers(i))]))))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.15:
                edges.add((ids[i], ids[j]))
    links = [SubstrateLink(e, math.inf if rng.random() < 0.4 else float(rng.integers(3, 16)))
             for e in sorted(edges)]
    return SubstrateNetwork(tuple(nodes), tuple(links))


def random_request(rng: np.random.Generator, vn_id: str, k: int | None = None):
    """Chain-shaped slice plus its optimal plan under random prices."""
    k = int(rng.integers(1, 4)) if k is None else k
    R = np.zeros((k, k))
    for i in range(k - 1):
        R[i, i + 1] = 1.0
    gamma = np.zeros(k)
    gamma[0] = float(rng.uniform(1.0, 4.0))
    traffic = TrafficModel(tuple(gamma), tuple(map(tuple, R)))
    nodes = tuple(VirtualNode(KINDS[int(rng.integers(len(KINDS)))], name=f"n{i}") for i in range(k))
    req = VnRequest(vn_id, nodes, tuple((i, i + 1) for i in range(k - 1)), traffic,
                    sla_latency=float(rng.uniform(0.5, 2.0)) * k, priority=int(rng.integers(0, 3)))
    plan = optimal_capacity(solve_traffic_equations(traffic), random_prices(rng, k), req.sla_latency)
    return req, plan


def random_embedding_instance(seed: int):
    rng = np.random.default_rng(seed)
    sub = random_substrate(rng)
    reqs = [random_request(rng, f"vn{j}") for j in range(int(rng.integers(1, 5)))]
    return sub, reqs
