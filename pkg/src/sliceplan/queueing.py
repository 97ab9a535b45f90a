"""Open Jackson network analysis with M/M/1 FCFS nodes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ClosedNetworkError, ParameterError, UnstableNetworkError
from .model import TrafficModel

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class FlowSolution:
    lambdas: tuple[float, ...]
    total_external: float

    @property
    def size(self) -> int:
        return len(self.lambdas)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.lambdas, dtype=float)


@dataclass(frozen=True)
class QueueMetrics:
    mean_queue_lengths: tuple[float, ...]
    mean_system_delay: float
    per_node_delays: tuple[float, ...]


def solve_traffic_equations(traffic: TrafficModel) -> FlowSolution:
    """Effective arrival rates: the solution of ``lam = gamma + R^T lam``."""
    bad = traffic.violations()
    if any("closed" in v for v in bad):
        raise ClosedNetworkError("routing matrix has no exit")
    if bad:
        raise ParameterError("; ".join(bad))
    gamma = np.asarray(traffic.external_arrivals, dtype=float)
    R = np.asarray(traffic.routing, dtype=float).reshape(len(gamma), len(gamma))
    if len(gamma) and np.max(np.abs(np.linalg.eigvals(R))) >= 1 - 1e-12:
        # substochastic rows can still trap packets in a recurrent class
        raise ClosedNetworkError("routing matrix has spectral radius 1")
    A = np.eye(len(gamma)) - R.T
    try:
        lam = np.linalg.solve(A, gamma)
    except np.linalg.LinAlgError as exc:
        raise ClosedNetworkError(str(exc)) from exc
    # pure forwarding chains should come out exact; clip round-off below zero
    lam = np.maximum(lam, 0.0)
    resid = np.linalg.norm(A @ lam - gamma)
    scale = max(np.linalg.norm(gamma), np.linalg.norm(lam), 1e-300)
    if resid > RESIDUAL_TOL * scale:
        raise ClosedNetworkError(f"traffic equations ill-conditioned (residual {resid:.3g})")
    return FlowSolution(tuple(float(x) for x in lam), traffic.total_external)


def _check_dims(flow: FlowSolution, mus: Sequence[float]) -> np.ndarray:
    mu = np.asarray(mus, dtype=float)
    if mu.shape != (flow.size,):
        raise ParameterError(f"expected {flow.size} service rates, got {mu.shape}")
    return mu


def is_stable(flow: FlowSolution, mus: Sequence[float]) -> bool:
    """True iff every node that carries traffic has ``lam_i < mu_i``.

    Nodes with zero arrival rate never hold packets and are stable at any rate.
    """
    mu = _check_dims(flow, mus)
    lam = flow.as_array()
    loaded = lam > 0
    return bool(np.all(lam[loaded] < mu[loaded]))


def mean_delay(flow: FlowSolution, mus: Sequence[float]) -> QueueMetrics:
    """Per-node and end-to-end mean delays via Jackson's theorem and Little's law."""
    mu = _check_dims(flow, mus)
    if not is_stable(flow, mu):
        raise UnstableNetworkError(f"unstable network: lambda={flow.lambdas}, mu={tuple(mu)}")
    if not (flow.total_external > 0):
        raise ParameterError("mean delay undefined without external traffic")
    lam = flow.as_array()
    loaded = lam > 0
    per_node = np.zeros_like(lam)
    per_node[loaded] = 1.0 / (mu[loaded] - lam[loaded])
    idle = ~loaded & (mu > 0)
    per_node[idle] = 1.0 / mu[idle]
    lengths = np.where(loaded, lam * per_node, 0.0)
    total = float(np.sum(lengths)) / flow.total_external
    return QueueMetrics(tuple(lengths.tolist()), total, tuple(per_node.tolist()))
