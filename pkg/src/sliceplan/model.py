"""Core value types: substrate, slice requests, traffic and prices.

All rates are packets/second. Every type here is a frozen dataclass; residual
capacities change only by building new values (see :mod:`sliceplan.embedding`).
Construction does not validate. Use :func:`validate_substrate` and
:func:`validate_request`, which report violations as data.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .errors import ParameterError

UNCONSTRAINED = math.inf
DEFAULT_PACKET_BITS = 1e6


class NodeKind(str, enum.Enum):
    RADIO_ACCESS = "RadioAccess"
    SERVING_GATEWAY = "ServingGateway"
    PACKET_GATEWAY = "PacketGateway"
    ADMIN_GATEWAY = "AdminGateway"
    GENERIC = "Generic"

    def __str__(self) -> str:
        return self.value


def link_id(a: str, b: str) -> str:
    """Canonical name of the undirected link between ``a`` and ``b``."""
    lo, hi = sorted((a, b))
    return f"{lo}--{hi}"


@dataclass(frozen=True)
class SubstrateNode:
    id: str
    kind: NodeKind
    capacity: float
    residual: float | None = None

    def __post_init__(self):
        if self.residual is None:
            object.__setattr__(self, "residual", self.capacity)


@dataclass(frozen=True)
class SubstrateLink:
    endpoints: tuple[str, str]
    bandwidth: float = UNCONSTRAINED
    residual_bandwidth: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "endpoints", tuple(self.endpoints))
        if self.residual_bandwidth is None:
            object.__setattr__(self, "residual_bandwidth", self.bandwidth)

    @property
    def id(self) -> str:
        return link_id(*self.endpoints)

    @property
    def constrained(self) -> bool:
        return math.isfinite(self.bandwidth)


@dataclass(frozen=True)
class SubstrateNetwork:
    nodes: tuple[SubstrateNode, ...]
    links: tuple[SubstrateLink, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.id)))
        object.__setattr__(self, "links", tuple(sorted(self.links, key=lambda l: l.id)))

    def node(self, node_id: str) -> SubstrateNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def link(self, lid: str) -> SubstrateLink:
        for l in self.links:
            if l.id == lid:
                return l
        raise KeyError(lid)

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def adjacency(self) -> dict[str, list[str]]:
        """Neighbour lists in lexicographic order (dangling endpoints skipped)."""
        adj: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for l in self.links:
            a, b = l.endpoints
            if a in adj and b in adj and a != b:
                adj[a].append(b)
                adj[b].append(a)
        for nbrs in adj.values():
            nbrs.sort()
        return adj

    def with_residuals(self, node_residuals: dict[str, float],
                       link_residuals: dict[str, float]) -> SubstrateNetwork:
        nodes = [replace(n, residual=node_residuals.get(n.id, n.residual)) for n in self.nodes]
        links = [replace(l, residual_bandwidth=link_residuals.get(l.id, l.residual_bandwidth))
                 for l in self.links]
        return SubstrateNetwork(tuple(nodes), tuple(links))


@dataclass(frozen=True)
class TrafficModel:
    """Open-network traffic: external arrivals, routing matrix, packet size.

    ``routing[i][j]`` is the probability that a packet leaving virtual node
    ``i`` moves to ``j``; the row deficit is the exit probability.
    """

    external_arrivals: tuple[float, ...]
    routing: tuple[tuple[float, ...], ...]
    mean_packet_size: float = DEFAULT_PACKET_BITS

    def __post_init__(self):
        object.__setattr__(self, "external_arrivals", tuple(float(x) for x in self.external_arrivals))
        object.__setattr__(self, "routing", tuple(tuple(float(x) for x in row) for row in self.routing))

    @property
    def size(self) -> int:
        return len(self.external_arrivals)

    @property
    def total_external(self) -> float:
        return math.fsum(self.external_arrivals)

    def to_bits_per_second(self, rate: float) -> float:
        return rate * self.mean_packet_size

    def violations(self) -> list[str]:
        out = []
        n = self.size
        if len(self.routing) != n or any(len(row) != n for row in self.routing):
            return [f"routing matrix must be {n}x{n}"]
        if any(g < 0 or not math.isfinite(g) for g in self.external_arrivals):
            out.append("external arrivals must be finite and non-negative")
        if any(p < 0 or p > 1 for row in self.routing for p in row):
            out.append("routing probabilities must lie in [0, 1]")
        sums = [math.fsum(row) for row in self.routing]
        if any(s > 1 + 1e-12 for s in sums):
            out.append("routing row sums must not exceed 1")
        if n and all(s >= 1 - 1e-12 for s in sums):
            out.append("network is closed: no row has an exit probability")
        if not (self.mean_packet_size > 0):
            out.append("mean packet size must be positive")
        return out


@dataclass(frozen=True)
class VirtualNode:
    kind: NodeKind
    fixed_capacity: float | None = None
    name: str | None = None


@dataclass(frozen=True)
class VnRequest:
    id: str
    virtual_nodes: tuple[VirtualNode, ...]
    virtual_links: tuple[tuple[int, int], ...]
    traffic: TrafficModel
    sla_latency: float
    budget: float = math.inf
    priority: int = 0
    consume_bandwidth: bool = True

    def __post_init__(self):
        object.__setattr__(self, "virtual_nodes", tuple(self.virtual_nodes))
        object.__setattr__(self, "virtual_links", tuple(tuple(l) for l in self.virtual_links))

    @property
    def size(self) -> int:
        return len(self.virtual_nodes)

    def node_name(self, i: int) -> str:
        name = self.virtual_nodes[i].name
        return name if name is not None else f"v{i}"

    @property
    def node_names(self) -> list[str]:
        return [self.node_name(i) for i in range(self.size)]


@dataclass(frozen=True)
class PriceVector:
    prices: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))
        if any(not (p > 0) or not math.isfinite(p) for p in self.prices):
            raise ParameterError("prices must be finite and positive")

    def __len__(self) -> int:
        return len(self.prices)

    def __iter__(self):
        return iter(self.prices)

    def scaled(self, c: float) -> PriceVector:
        return PriceVector(tuple(c * p for p in self.prices))


def _connected(ids: Sequence, edges: Iterable[tuple]) -> bool:
    ids = list(ids)
    if len(ids) <= 1:
        return True
    adj = {i: set() for i in ids}
    for a, b in edges:
        if a in adj and b in adj:
            adj[a].add(b)
            adj[b].add(a)
    seen = {ids[0]}
    todo = deque([ids[0]])
    while todo:
        for nb in adj[todo.popleft()]:
            if nb not in seen:
                seen.add(nb)
                todo.append(nb)
    return len(seen) == len(ids)


def validate_substrate(net: SubstrateNetwork) -> list[str]:
    """Return every broken invariant of ``net``; empty means well-formed."""
    out = []
    ids = [n.id for n in net.nodes]
    if len(set(ids)) != len(ids):
        out.append("substrate: duplicate node id")
    for n in net.nodes:
        if not isinstance(n.kind, NodeKind):
            out.append(f"node {n.id!r}: unknown kind {n.kind!r}")
        if not (n.capacity > 0):
            out.append(f"node {n.id!r}: capacity must be positive")
        elif not (0 <= n.residual <= n.capacity):
            out.append(f"node {n.id!r}: residual must lie in [0, capacity]")
    known = set(ids)
    seen_links = set()
    for l in net.links:
        a, b = l.endpoints
        if a == b:
            out.append(f"link {l.id!r}: endpoints must be distinct")
        for e in (a, b):
            if e not in known:
                out.append(f"link {l.id!r}: dangling endpoint {e!r}")
        if l.id in seen_links:
            out.append(f"link {l.id!r}: duplicate link")
        seen_links.add(l.id)
        if not (l.bandwidth > 0):
            out.append(f"link {l.id!r}: bandwidth must be positive")
        elif not (0 <= l.residual_bandwidth <= l.bandwidth):
            out.append(f"link {l.id!r}: residual bandwidth must lie in [0, bandwidth]")
    if not _connected(ids, (l.endpoints for l in net.links)):
        out.append("substrate: network is not connected")
    return out


def validate_request(req: VnRequest) -> list[str]:
    out = [f"vn {req.id!r}: {v}" for v in req.traffic.violations()]
    n = req.size
    if req.traffic.size != n:
        out.append(f"vn {req.id!r}: traffic has {req.traffic.size} nodes, topology has {n}")
        return out
    if not (req.sla_latency > 0):
        out.append(f"vn {req.id!r}: sla latency must be positive")
    if not (req.budget > 0):
        out.append(f"vn {req.id!r}: budget must be positive")
    for i, vn in enumerate(req.virtual_nodes):
        if not isinstance(vn.kind, NodeKind):
            out.append(f"vn {req.id!r}: node {i} has unknown kind {vn.kind!r}")
        if vn.fixed_capacity is not None and not (vn.fixed_capacity > 0):
            out.append(f"vn {req.id!r}: node {i} fixed capacity must be positive")
    names = req.node_names
    if len(set(names)) != len(names):
        out.append(f"vn {req.id!r}: duplicate virtual node names")
    pairs = set()
    for a, b in req.virtual_links:
        if not (0 <= a < n and 0 <= b < n) or a == b:
            out.append(f"vn {req.id!r}: bad virtual link ({a}, {b})")
        pairs.add(frozenset((a, b)))
    if not out:
        for i, row in enumerate(req.traffic.routing):
            for j, p in enumerate(row):
                if p > 0 and i != j and frozenset((i, j)) not in pairs:
                    out.append(f"vn {req.id!r}: routing {i}->{j} has no virtual link")
        if not _connected(range(n), req.virtual_links):
            out.append(f"vn {req.id!r}: virtual topology is not connected")
    return out


CASE_STUDY_NAMES = ("ran", "sgw", "admin_pgw", "pgw")
CASE_STUDY_KINDS = (NodeKind.RADIO_ACCESS, NodeKind.SERVING_GATEWAY,
                    NodeKind.ADMIN_GATEWAY, NodeKind.PACKET_GATEWAY)


def case_study_topology(lam: float, q: float, *, sla_latency: float = 0.010,
                        budget: float = math.inf, vn_id: str = "vn",
                        priority: int = 0) -> VnRequest:
    """Four-node slice: radio access -> S-GW -> {admin P-GW w.p. q, P-GW w.p. 1-q}."""
    if not (lam > 0) or not math.isfinite(lam):
        raise ParameterError(f"lambda must be positive, got {lam}")
    if not (0 <= q <= 1):
        raise ParameterError(f"q must lie in [0, 1], got {q}")
    routing = (
        (0.0, 1.0, 0.0, 0.0),
        (0.0, 0.0, q, 1.0 - q),
        (0.0, 0.0, 0.0, 0.0),
        (0.0, 0.0, 0.0, 0.0),
    )
    traffic = TrafficModel((lam, 0.0, 0.0, 0.0), routing)
    nodes = tuple(VirtualNode(k, name=nm) for k, nm in zip(CASE_STUDY_KINDS, CASE_STUDY_NAMES))
    return VnRequest(vn_id, nodes, ((0, 1), (1, 2), (1, 3)), traffic, sla_latency,
                     budget=budget, priority=priority)


@dataclass(frozen=True)
class Compatibility:
    """Which substrate kinds may host each virtual kind (default: same kind)."""

    allowed: dict = field(default_factory=dict)

    def hosts(self, virtual_kind: NodeKind) -> frozenset:
        return frozenset(self.allowed.get(virtual_kind, (virtual_kind,)))

    def __hash__(self):
        return hash(tuple(sorted((k.value, tuple(sorted(v))) for k, v in self.allowed.items())))
