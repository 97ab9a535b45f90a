"""Virtual network embedding with admission control.

Virtual nodes map one-to-one (within a slice) onto kind-compatible substrate
nodes; each virtual link maps onto a single simple substrate path. Node demand
is the slice's planned service rate; link demand is the packet flow the routing
matrix sends across the virtual link (zero when the slice does not consume
bandwidth).

Residuals are never updated incrementally. :class:`AllocationState` derives
them from the base substrate minus the sum of active allocations, so releasing
a slice restores the previous residuals bit for bit.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .capacity import CapacityPlan
from .errors import EmbeddingError, ParameterError, SearchTooLargeError
from .model import Compatibility, SubstrateNetwork, VnRequest, link_id
from .queueing import solve_traffic_equations

log = logging.getLogger(__name__)

REASON_NODE_CAPACITY = "node capacity"
REASON_LINK_BANDWIDTH = "link bandwidth"
REASON_NO_KIND = "no kind-compatible node"
REASON_NO_PATH = "no path"
REASON_DUPLICATE = "duplicate slice id"

EXACT_MAX_REQUESTS = 4
EXACT_MAX_NODES = 10
FIT_TOL = 1e-9


@dataclass(frozen=True)
class Embedding:
    vn_id: str
    node_map: tuple[str, ...]
    link_map: tuple[tuple[str, ...], ...]
    node_alloc: tuple[float, ...]
    link_alloc: tuple[float, ...]

    def node_usage(self) -> dict[str, float]:
        return dict(zip(self.node_map, self.node_alloc))

    def link_usage(self) -> dict[str, float]:
        use: dict[str, float] = {}
        for path, amount in zip(self.link_map, self.link_alloc):
            for a, b in zip(path, path[1:]):
                lid = link_id(a, b)
                use[lid] = use.get(lid, 0.0) + amount
        return use


@dataclass(frozen=True)
class AdmissionDecision:
    vn_id: str
    admitted: bool
    reason: str = ""
    embedding: Embedding | None = None


def link_demands(request: VnRequest) -> tuple[float, ...]:
    """Packet flow across each virtual link, in both directions combined."""
    if not request.consume_bandwidth:
        return tuple(0.0 for _ in request.virtual_links)
    lam = solve_traffic_equations(request.traffic).lambdas
    R = request.traffic.routing
    return tuple(lam[a] * R[a][b] + lam[b] * R[b][a] for a, b in request.virtual_links)


def _fits(demand: float, residual: float, scale: float) -> bool:
    return demand <= residual + FIT_TOL * max(1.0, scale if math.isfinite(scale) else 1.0)


class AllocationState:
    """Substrate plus the set of active embeddings. Single writer."""

    def __init__(self, substrate: SubstrateNetwork, compatibility: Compatibility | None = None):
        self.base = substrate
        self.compatibility = compatibility or Compatibility()
        self._active: dict[str, Embedding] = {}
        self._adj = substrate.adjacency()
        self._paths: dict = {}
        self._refresh()

    @property
    def active(self) -> dict[str, Embedding]:
        return dict(self._active)

    def _refresh(self) -> None:
        node_use: dict[str, list[float]] = {}
        link_use: dict[str, list[float]] = {}
        for vn_id in sorted(self._active):
            emb = self._active[vn_id]
            for k, v in emb.node_usage().items():
                node_use.setdefault(k, []).append(v)
            for k, v in emb.link_usage().items():
                link_use.setdefault(k, []).append(v)
        nres = {n.id: max(0.0, n.residual - math.fsum(node_use.get(n.id, ()))) for n in self.base.nodes}
        lres = {}
        for l in self.base.links:
            used = math.fsum(link_use.get(l.id, ()))
            lres[l.id] = l.residual_bandwidth if not l.constrained else max(0.0, l.residual_bandwidth - used)
        self.node_residual = nres
        self.link_residual = lres
        self.substrate = self.base.with_residuals(nres, lres)

    def allocated(self) -> tuple[dict[str, float], dict[str, float]]:
        """Per-element sums of active allocations (the conservation counterpart of residuals)."""
        nodes = {n.id: 0.0 for n in self.base.nodes}
        links = {l.id: 0.0 for l in self.base.links}
        for vn_id in sorted(self._active):
            for k, v in self._active[vn_id].node_usage().items():
                nodes[k] += v
            for k, v in self._active[vn_id].link_usage().items():
                links[k] += v
        return nodes, links

    def snapshot(self):
        return (self.substrate, tuple(sorted(self._active.items())))

    def copy(self) -> AllocationState:
        other = AllocationState.__new__(AllocationState)
        other.base = self.base
        other.compatibility = self.compatibility
        other._active = dict(self._active)
        other._adj = self._adj
        other._paths = self._paths
        other.node_residual = self.node_residual
        other.link_residual = self.link_residual
        other.substrate = self.substrate
        return other

    def _check_fit(self, node_delta: dict[str, float], link_delta: dict[str, float]) -> str | None:
        for k, d in node_delta.items():
            if d > 0 and not _fits(d, self.node_residual[k], self.base.node(k).capacity):
                return REASON_NODE_CAPACITY
        for k, d in link_delta.items():
            if d > 0 and not _fits(d, self.link_residual[k], self.base.link(k).bandwidth):
                return REASON_LINK_BANDWIDTH
        return None

    def commit(self, emb: Embedding) -> None:
        if emb.vn_id in self._active:
            raise ParameterError(f"slice {emb.vn_id!r} already active")
        reason = self._check_fit(emb.node_usage(), emb.link_usage())
        if reason:
            raise EmbeddingError(reason, emb.vn_id)
        self._active[emb.vn_id] = emb
        self._refresh()

    def remove(self, vn_id: str) -> Embedding:
        if vn_id not in self._active:
            raise ParameterError(f"unknown slice {vn_id!r}")
        emb = self._active.pop(vn_id)
        self._refresh()
        return emb

    def replace(self, emb: Embedding) -> bool:
        """Swap in new allocations for an active slice if the net increase fits."""
        old = self._active[emb.vn_id]
        node_delta = emb.node_usage()
        for k, v in old.node_usage().items():
            node_delta[k] = node_delta.get(k, 0.0) - v
        link_delta = emb.link_usage()
        for k, v in old.link_usage().items():
            link_delta[k] = link_delta.get(k, 0.0) - v
        if self._check_fit(node_delta, link_delta):
            return False
        self._active[emb.vn_id] = emb
        self._refresh()
        return True


# ---------------------------------------------------------------- search core

class _Residuals:
    """Mutable residual view used inside a search; updated and undone in place."""

    def __init__(self, state: AllocationState):
        self.node = dict(state.node_residual)
        self.link = dict(state.link_residual)
        self.node_cap = {n.id: n.capacity for n in state.base.nodes}
        self.link_cap = {l.id: l.bandwidth for l in state.base.links}
        self._finite = [l.id for l in state.base.links if l.constrained]

    def leftover(self) -> float:
        return math.fsum(self.node.values()) + math.fsum([self.link[k] for k in self._finite])

    def pooled_fit(self, reqs: Sequence[_Request]) -> bool:
        """Necessary condition: each host set's pooled residual covers the demand confined to it."""
        groups: dict[frozenset, list[float]] = {}
        for r in reqs:
            for k, d in enumerate(r.node_dem):
                groups.setdefault(frozenset(r.candidates[k]), []).append(d)
        for hosts in groups:
            need = math.fsum(d for h, ds in groups.items() if h <= hosts for d in ds)
            scale = max((self.node_cap[s] for s in hosts), default=1.0)
            if not _fits(need, math.fsum(self.node[s] for s in hosts), scale):
                return False
        return True


def _components(adj: dict[str, list[str]]) -> dict[str, int]:
    comp: dict[str, int] = {}
    for start in adj:
        if start in comp:
            continue
        comp[start] = len(comp)
        label = comp[start]
        todo = deque([start])
        while todo:
            for nb in adj[todo.popleft()]:
                if nb not in comp:
                    comp[nb] = label
                    todo.append(nb)
    return comp


def _path_table(adj, src: str, dst: str, link_cap) -> list[tuple[tuple[str, ...], tuple[str, ...]]]:
    """Simple paths worth trying: the shortest per inclusion-minimal set of constrained links."""
    found: dict[frozenset, tuple[str, ...]] = {}
    path = [src]
    on_path = {src}

    def dfs(u: str):
        if u == dst:
            key = frozenset(lid for lid in (link_id(a, b) for a, b in zip(path, path[1:]))
                            if math.isfinite(link_cap[lid]))
            cand = tuple(path)
            old = found.get(key)
            if old is None or (len(cand), cand) < (len(old), old):
                found[key] = cand
            return
        for v in adj[u]:
            if v not in on_path:
                path.append(v)
                on_path.add(v)
                dfs(v)
                on_path.discard(v)
                path.pop()

    dfs(src)
    # a path whose constrained links strictly contain another's is never better
    keys = list(found)
    table = [(found[k], tuple(sorted(k))) for k in keys if not any(o < k for o in keys)]
    return sorted(table, key=lambda e: (len(e[0]), e[0]))


def _simple_paths(adj, src: str, dst: str, link_res, link_cap, demand: float,
                  cache: dict | None = None) -> list[tuple[str, ...]]:
    """Residual-feasible candidate paths for one virtual link, shortest first."""
    if demand == 0:
        p = _shortest_path(adj, src, dst, link_res, link_cap, 0.0)
        return [p] if p else []
    cache = {} if cache is None else cache
    table = cache.get((src, dst))
    if table is None:
        table = cache[(src, dst)] = _path_table(adj, src, dst, link_cap)
    # unconstrained links always fit, so feasibility depends on the key alone
    return [p for p, lids in table if all(_fits(demand, link_res[l], link_cap[l]) for l in lids)]


def _shortest_path(adj, src: str, dst: str, link_res, link_cap, demand: float) -> tuple[str, ...] | None:
    """Fewest-hop residual-feasible path (BFS, neighbours in lexicographic order)."""
    parent = {src: None}
    todo = deque([src])
    while todo:
        u = todo.popleft()
        if u == dst:
            break
        for v in adj[u]:
            if v in parent:
                continue
            lid = link_id(u, v)
            if demand > 0 and not _fits(demand, link_res[lid], link_cap[lid]):
                continue
            parent[v] = u
            todo.append(v)
    if dst not in parent:
        return None
    out = [dst]
    while parent[out[-1]] is not None:
        out.append(parent[out[-1]])
    return tuple(reversed(out))


class _Request:
    """A slice request flattened into the arrays the search needs."""

    def __init__(self, request: VnRequest, plan: CapacityPlan, state: AllocationState):
        if plan.size != request.size:
            raise ParameterError(f"plan for {request.id!r} has {plan.size} rates, topology has {request.size}")
        self.request = request
        self.id = request.id
        self.priority = request.priority
        self.node_dem = tuple(plan.mus)
        self.links = request.virtual_links
        self.link_dem = link_demands(request)
        hosts = [state.compatibility.hosts(vn.kind) for vn in request.virtual_nodes]
        self.candidates = [[n.id for n in state.base.nodes if n.kind in h] for h in hosts]

    def embedding(self, node_map, link_map) -> Embedding:
        return Embedding(self.id, tuple(node_map), tuple(link_map), self.node_dem, self.link_dem)


def _placements(req: _Request, adj, comp, res: _Residuals, stats: dict, *,
                paths_cache: dict | None = None, prune=None) -> Iterator[tuple]:
    """Yield every feasible (node_map, link_map) for one slice.

    While a placement is yielded its allocations are applied to ``res``; they
    are undone when the generator resumes. ``prune()`` returning true cuts the
    branch after a link is routed.
    """
    n = len(req.node_dem)
    assign: list[str | None] = [None] * n
    paths: list[tuple[str, ...] | None] = [None] * len(req.links)
    used: set[str] = set()

    def place_links(j: int):
        if j == len(req.links):
            yield tuple(assign), tuple(paths)
            return
        a, b = req.links[j]
        d = req.link_dem[j]
        for path in _simple_paths(adj, assign[a], assign[b], res.link, res.link_cap, d, paths_cache):
            lids = [link_id(u, v) for u, v in zip(path, path[1:])]
            for lid in lids:
                res.link[lid] -= d
            paths[j] = path
            if prune is None or not prune():
                yield from place_links(j + 1)
            for lid in lids:
                res.link[lid] += d
        paths[j] = None

    def place_nodes(k: int):
        if k == n:
            stats["nodes_complete"] = True
            if all(comp[assign[a]] == comp[assign[b]] for a, b in req.links):
                stats["connected"] = True
                yield from place_links(0)
            return
        d = req.node_dem[k]
        order = sorted(req.candidates[k], key=lambda s: (-res.node[s], s))
        for s in order:
            if s in used or not _fits(d, res.node[s], res.node_cap[s]):
                continue
            assign[k] = s
            used.add(s)
            res.node[s] -= d
            yield from place_nodes(k + 1)
            res.node[s] += d
            used.discard(s)
        assign[k] = None

    yield from place_nodes(0)


def _rejection_reason(req: _Request, stats: dict) -> str:
    if any(not c for c in req.candidates):
        return REASON_NO_KIND
    if not stats.get("nodes_complete"):
        return REASON_NODE_CAPACITY
    if not stats.get("connected"):
        return REASON_NO_PATH
    return REASON_LINK_BANDWIDTH


def _greedy_place(req: _Request, state: AllocationState) -> Embedding:
    """Uncoordinated placement: nodes by largest residual, then shortest feasible paths."""
    res = _Residuals(state)
    node_map = []
    for k, d in enumerate(req.node_dem):
        cands = [s for s in req.candidates[k] if s not in node_map]
        if not req.candidates[k]:
            raise EmbeddingError(REASON_NO_KIND, f"virtual node {k}")
        if not cands:
            raise EmbeddingError(REASON_NODE_CAPACITY, f"virtual node {k}: all hosts taken")
        best = min(cands, key=lambda s: (-res.node[s], s))
        if not _fits(d, res.node[best], res.node_cap[best]):
            raise EmbeddingError(REASON_NODE_CAPACITY, f"virtual node {k} needs {d:.6g}")
        res.node[best] -= d
        node_map.append(best)
    comp = _components(state._adj)
    link_map = []
    for (a, b), d in zip(req.links, req.link_dem):
        src, dst = node_map[a], node_map[b]
        if comp[src] != comp[dst]:
            raise EmbeddingError(REASON_NO_PATH, f"{src} and {dst} are disconnected")
        path = _shortest_path(state._adj, src, dst, res.link, res.link_cap, d)
        if path is None:
            raise EmbeddingError(REASON_LINK_BANDWIDTH, f"{src}->{dst} needs {d:.6g}")
        for u, v in zip(path, path[1:]):
            res.link[link_id(u, v)] -= d
        link_map.append(path)
    return req.embedding(node_map, link_map)


def _exact_place(req: _Request, state: AllocationState) -> Embedding:
    res = _Residuals(state)
    stats: dict = {}
    for node_map, link_map in _placements(req, state._adj, _components(state._adj), res, stats,
                                          paths_cache=state._paths):
        return req.embedding(node_map, link_map)
    raise EmbeddingError(_rejection_reason(req, stats), req.id)


# ------------------------------------------------------------------ public ops

def embed_one(state: AllocationState, request: VnRequest, plan: CapacityPlan, *,
              mode: str = "exact") -> Embedding:
    """Place one slice and commit it; raises :class:`EmbeddingError` leaving ``state`` untouched."""
    if request.id in state._active:
        raise EmbeddingError(REASON_DUPLICATE, request.id)
    req = _Request(request, plan, state)
    if mode == "exact":
        emb = _exact_place(req, state)
    elif mode == "greedy":
        emb = _greedy_place(req, state)
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    state.commit(emb)
    return emb


def admit_dynamic(state: AllocationState, request: VnRequest, plan: CapacityPlan, *,
                  mode: str = "exact") -> AdmissionDecision:
    """Admit a new slice only if it fits in residual capacity as is.

    Existing slices keep their allocations whatever the outcome.
    """
    try:
        emb = embed_one(state, request, plan, mode=mode)
    except EmbeddingError as exc:
        log.debug("rejected %s: %s", request.id, exc)
        return AdmissionDecision(request.id, False, exc.reason)
    return AdmissionDecision(request.id, True, "", emb)


def release(state: AllocationState, vn_id: str) -> AllocationState:
    state.remove(vn_id)
    return state


def resize(state: AllocationState, request: VnRequest, plan: CapacityPlan) -> bool:
    """Re-allocate an active slice in place (same mapping, new amounts).

    Applies only if every net increase fits the residuals; returns whether it did.
    """
    old = state._active.get(request.id)
    if old is None:
        raise ParameterError(f"unknown slice {request.id!r}")
    if plan.size != len(old.node_map):
        raise ParameterError("plan size differs from the embedded topology")
    new = Embedding(request.id, old.node_map, old.link_map, tuple(plan.mus), link_demands(request))
    return state.replace(new)


def _subset_order(reqs: Sequence[_Request], k: int) -> list[tuple[_Request, ...]]:
    subsets = list(itertools.combinations(reqs, k))
    subsets.sort(key=lambda s: (tuple(sorted((-r.priority for r in s))), tuple(sorted(r.id for r in s))))
    return subsets


def _best_joint(subset: Sequence[_Request], state: AllocationState, *, feasibility_only: bool = False):
    """Joint placement of ``subset`` maximising leftover residual, or None if infeasible."""
    res = _Residuals(state)
    comp = _components(state._adj)
    best: dict = {"score": -math.inf, "placement": None}
    chosen: list = [None] * len(subset)
    tail_demand = [math.fsum(math.fsum(r.node_dem) for r in subset[i:]) for i in range(len(subset) + 1)]

    def dfs(i: int):
        if res.leftover() - tail_demand[i] <= best["score"] or not res.pooled_fit(subset[i:]):
            return
        if i == len(subset):
            # any placement will do when only feasibility is asked; inf stops the search
            best["score"] = math.inf if feasibility_only else res.leftover()
            best["placement"] = list(chosen)
            return
        stats: dict = {}

        def prune():
            return res.leftover() - tail_demand[i + 1] <= best["score"]

        for placement in _placements(subset[i], state._adj, comp, res, stats,
                                     paths_cache=state._paths, prune=prune):
            chosen[i] = placement
            dfs(i + 1)
        chosen[i] = None

    dfs(0)
    return best["placement"]


def embed_max(substrate: SubstrateNetwork | AllocationState,
              requests: Sequence[tuple[VnRequest, CapacityPlan]], *,
              mode: str = "exact",
              compatibility: Compatibility | None = None) -> tuple[AllocationState, list[str]]:
    """Admit as many slices as possible at once.

    ``exact`` searches subsets from largest to smallest; among subsets of the
    winning size it prefers higher priorities, then lexicographically smaller
    ids, then the placement leaving the most residual. ``greedy`` walks the
    requests by descending priority and places each one uncoordinated.
    Returns the resulting state and the admitted ids in admission order.
    """
    state = substrate.copy() if isinstance(substrate, AllocationState) \
        else AllocationState(substrate, compatibility)
    reqs = [_Request(r, p, state) for r, p in requests]
    ids = [r.id for r in reqs]
    if len(set(ids)) != len(ids):
        raise ParameterError("duplicate slice ids")
    reqs.sort(key=lambda r: (-r.priority, r.id))

    if mode == "greedy":
        admitted = []
        for r in reqs:
            try:
                emb = _greedy_place(r, state)
            except EmbeddingError:
                continue
            state.commit(emb)
            admitted.append(r.id)
        return state, admitted
    if mode != "exact":
        raise ParameterError(f"unknown mode {mode!r}")
    if len(reqs) > EXACT_MAX_REQUESTS or len(state.base.nodes) > EXACT_MAX_NODES:
        raise SearchTooLargeError(
            f"exact mode handles at most {EXACT_MAX_REQUESTS} requests on {EXACT_MAX_NODES} "
            f"substrate nodes; use mode='greedy'")

    # a slice that cannot be placed alone cannot be part of any admitted set
    reqs = [r for r in reqs if _best_joint([r], state, feasibility_only=True) is not None]
    for k in range(len(reqs), 0, -1):
        for subset in _subset_order(reqs, k):
            subset = sorted(subset, key=lambda r: (-r.priority, r.id))
            placement = _best_joint(subset, state)
            if placement is None:
                continue
            for r, (node_map, link_map) in zip(subset, placement):
                state.commit(r.embedding(node_map, link_map))
            return state, [r.id for r in subset]
    return state, []


def conservation_error(state: AllocationState) -> float:
    """Largest absolute gap between (base residual - residual) and allocated sums."""
    nodes, links = state.allocated()
    errs = [abs((n.residual - state.node_residual[n.id]) - nodes[n.id]) for n in state.base.nodes]
    errs += [abs((l.residual_bandwidth - state.link_residual[l.id]) - links[l.id])
             for l in state.base.links if l.constrained]
    return max(errs, default=0.0)


def utilization(state: AllocationState) -> dict[str, float]:
    """Allocated share of each substrate node's capacity."""
    return {n.id: float(np.clip((n.capacity - state.node_residual[n.id]) / n.capacity, 0.0, 1.0))
            for n in state.base.nodes}
