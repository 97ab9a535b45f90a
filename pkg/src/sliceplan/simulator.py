"""Two-time-scale simulation.

Large scale: at each epoch boundary the provider processes slice departures,
traffic changes and arrivals, in that order, and then freezes the allocation.
Small scale: inside the epoch every active slice runs as its own packet-level
network of FCFS exponential servers with the slice's planned rates.
"""

from __future__ import annotations

import heapq
import logging
import math
import zlib
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .capacity import CapacityPlan
from .embedding import AllocationState, admit_dynamic, release, resize, utilization
from .errors import ParameterError, UnstableNetworkError
from .model import Compatibility, PriceVector, SubstrateNetwork, TrafficModel, VnRequest
from .pricing import best_response
from .queueing import is_stable, mean_delay, solve_traffic_equations

log = logging.getLogger(__name__)

DEFAULT_BATCHES = 20
DEFAULT_WARMUP_BATCHES = 1
CONFIDENCE = 0.95
_CHUNK = 1 << 16

EVENT_ORDER = {"depart": 0, "traffic": 1, "arrive": 2}


@dataclass(frozen=True)
class PacketStats:
    mean_delay: float
    half_width: float
    packets: int
    served: tuple[int, ...]
    batch_means: tuple[float, ...] = ()


def _draws(fn):
    while True:
        yield from fn(_CHUNK).tolist()


def batch_means(samples: np.ndarray, batches: int = DEFAULT_BATCHES,
                warmup: int = DEFAULT_WARMUP_BATCHES) -> tuple[float, float, tuple[float, ...]]:
    """Point estimate and CI half-width from contiguous batches, dropping the first ``warmup``."""
    if batches - warmup < 2:
        raise ParameterError("need at least two batches after warm-up")
    if len(samples) < batches:
        return float(np.mean(samples)), math.inf, ()
    parts = np.array_split(samples, batches)[warmup:]
    means = np.array([p.mean() for p in parts])
    kept = np.concatenate(parts)
    k = len(means)
    half = stats.t.ppf(0.5 + CONFIDENCE / 2, k - 1) * means.std(ddof=1) / math.sqrt(k)
    return float(kept.mean()), float(half), tuple(means.tolist())


def simulate_slice_packets(request: VnRequest, plan: CapacityPlan, duration: float, seed, *,
                           batches: int = DEFAULT_BATCHES,
                           warmup: int = DEFAULT_WARMUP_BATCHES) -> PacketStats:
    """Event-driven simulation of one slice for ``duration`` seconds of arrivals.

    Arrivals stop at ``duration`` and the network drains, so every admitted
    packet's sojourn is counted. Sojourns enter the batch means in exit order.
    Deterministic for a given ``seed`` (anything ``numpy.random.default_rng`` takes).
    """
    if not duration > 0:
        raise ParameterError("duration must be positive")
    traffic = request.traffic
    flow = solve_traffic_equations(traffic)
    if plan.size != flow.size:
        raise ParameterError("plan size does not match the slice topology")
    if not is_stable(flow, plan.mus):
        raise UnstableNetworkError(f"slice {request.id!r}: plan cannot carry its traffic")

    n = flow.size
    gamma = np.asarray(traffic.external_arrivals, dtype=float)
    ext_rate = float(gamma.sum())
    entry_cdf = (np.cumsum(gamma) / ext_rate).tolist()
    entry_fixed = int(np.argmax(gamma)) if np.count_nonzero(gamma) == 1 else None
    inv_mu = [1.0 / m if m > 0 else math.inf for m in plan.mus]
    route_cdf = [np.cumsum(row).tolist() for row in traffic.routing]
    # rows with a single certain successor (or none) need no random draw
    route_fixed: list[int | None] = []
    for row in traffic.routing:
        nz = [j for j, p in enumerate(row) if p > 0]
        if not nz:
            route_fixed.append(n)
        elif len(nz) == 1 and row[nz[0]] == 1.0:
            route_fixed.append(nz[0])
        else:
            route_fixed.append(None)

    rng = np.random.default_rng(seed)
    expo = _draws(rng.standard_exponential).__next__
    unif = _draws(rng.random).__next__

    queues = [deque() for _ in range(n)]
    busy = [False] * n
    served = [0] * n
    delays: list[float] = []
    push, pop = heapq.heappush, heapq.heappop
    heap = [(expo() / ext_rate, -1)]

    while heap:
        t, i = pop(heap)
        if i < 0:
            entry = t
            j = entry_fixed if entry_fixed is not None else bisect_right(entry_cdf, unif())
            nt = t + expo() / ext_rate
            if nt < duration:
                push(heap, (nt, -1))
        else:
            q = queues[i]
            entry = q.popleft()
            served[i] += 1
            if q:
                push(heap, (t + expo() * inv_mu[i], i))
            else:
                busy[i] = False
            j = route_fixed[i]
            if j is None:
                j = bisect_right(route_cdf[i], unif())
            if j >= n:
                delays.append(t - entry)
                continue
        queues[j].append(entry)
        if not busy[j]:
            busy[j] = True
            push(heap, (t + expo() * inv_mu[j], j))

    if not delays:
        return PacketStats(math.nan, math.inf, 0, tuple(served))
    mean, half, means = batch_means(np.asarray(delays), batches, warmup)
    return PacketStats(mean, half, len(delays), tuple(served), means)


def slice_seed(rng_seed: int, vn_id: str, epoch: int) -> int:
    """Per-slice, per-epoch seed; independent of how many other slices run."""
    seq = np.random.SeedSequence([int(rng_seed) & (2**64 - 1), zlib.crc32(vn_id.encode()), epoch])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------- epoch level

@dataclass(frozen=True)
class ScheduledEvent:
    time: float
    kind: str
    vn_id: str
    request: VnRequest | None = None
    traffic: TrafficModel | None = None


@dataclass(frozen=True)
class EpochConfig:
    epoch_length: float
    schedule: tuple[ScheduledEvent, ...] = ()
    rng_seed: int = 0
    horizon: float | None = None
    batches: int = DEFAULT_BATCHES
    warmup: int = DEFAULT_WARMUP_BATCHES

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple(self.schedule))

    @property
    def n_epochs(self) -> int:
        h = self.horizon if self.horizon is not None else self.epoch_length
        return max(1, math.ceil(h / self.epoch_length - 1e-12))

    def validate(self) -> None:
        if not self.epoch_length > 0:
            raise ParameterError("epoch length must be positive")
        if self.horizon is not None and not self.horizon > 0:
            raise ParameterError("horizon must be positive")
        end = self.n_epochs * self.epoch_length
        last = -math.inf
        for ev in self.schedule:
            if ev.kind not in EVENT_ORDER:
                raise ParameterError(f"unknown event kind {ev.kind!r}")
            if not 0 <= ev.time < end:
                raise ParameterError(f"event time {ev.time} outside [0, {end})")
            if ev.time < last:
                raise ParameterError("schedule must be sorted by time")
            last = ev.time
            if ev.kind == "arrive" and (ev.request is None or ev.request.id != ev.vn_id):
                raise ParameterError(f"arrival of {ev.vn_id!r} lacks its request")
            if ev.kind == "traffic" and ev.traffic is None:
                raise ParameterError(f"traffic change for {ev.vn_id!r} lacks a traffic model")


@dataclass(frozen=True)
class AdmissionRecord:
    time: float
    vn_id: str
    event: str
    outcome: str
    reason: str = ""


@dataclass(frozen=True)
class DelayRecord:
    epoch: int
    start: float
    vn_id: str
    analytic: float
    measured: float
    half_width: float
    packets: int


@dataclass(frozen=True)
class UtilizationRecord:
    epoch: int
    start: float
    node_id: str
    utilization: float


@dataclass(frozen=True)
class SimReport:
    per_vn_measured_delay: dict[str, float]
    per_vn_analytic_delay: dict[str, float]
    confidence_half_width: dict[str, float]
    admission_log: tuple[AdmissionRecord, ...]
    utilization: dict[str, float]
    epoch_utilization: tuple[UtilizationRecord, ...] = ()
    delays: tuple[DelayRecord, ...] = field(default=())


def _prices_for(prices, vn_id: str) -> PriceVector:
    if isinstance(prices, Mapping):
        return prices[vn_id]
    return prices


def run_two_time_scale(substrate: SubstrateNetwork | AllocationState, config: EpochConfig,
                       initial_requests: Sequence[VnRequest],
                       prices: PriceVector | Mapping[str, PriceVector], *,
                       compatibility: Compatibility | None = None,
                       headroom: float = 0.0, mode: str = "exact") -> SimReport:
    """Replay the schedule epoch by epoch and simulate packets between boundaries."""
    config.validate()
    state = substrate.copy() if isinstance(substrate, AllocationState) \
        else AllocationState(substrate, compatibility)
    requests: dict[str, VnRequest] = {}
    plans: dict[str, CapacityPlan] = {}
    adm: list[AdmissionRecord] = []

    def arrive(t: float, req: VnRequest):
        try:
            plan = best_response(req, _prices_for(prices, req.id), headroom=headroom)
        except Exception as exc:  # sizing failure is a rejection, not a crash
            adm.append(AdmissionRecord(t, req.id, "arrive", "rejected", f"sizing: {exc}"))
            return
        d = admit_dynamic(state, req, plan, mode=mode)
        if d.admitted:
            requests[req.id], plans[req.id] = req, plan
            adm.append(AdmissionRecord(t, req.id, "arrive", "admitted"))
        else:
            adm.append(AdmissionRecord(t, req.id, "arrive", "rejected", d.reason))

    def depart(t: float, vn_id: str):
        if vn_id not in requests:
            adm.append(AdmissionRecord(t, vn_id, "depart", "ignored", "not active"))
            return
        release(state, vn_id)
        del requests[vn_id], plans[vn_id]
        adm.append(AdmissionRecord(t, vn_id, "depart", "released"))

    def change(t: float, vn_id: str, traffic: TrafficModel):
        if vn_id not in requests:
            adm.append(AdmissionRecord(t, vn_id, "traffic", "ignored", "not active"))
            return
        req = replace(requests[vn_id], traffic=traffic)
        requests[vn_id] = req
        try:
            plan = best_response(req, _prices_for(prices, vn_id), headroom=headroom)
        except Exception as exc:
            adm.append(AdmissionRecord(t, vn_id, "traffic", "degraded", f"sizing: {exc}"))
            return
        if resize(state, req, plan):
            plans[vn_id] = plan
            adm.append(AdmissionRecord(t, vn_id, "traffic", "resized"))
        else:
            adm.append(AdmissionRecord(t, vn_id, "traffic", "degraded", "insufficient residual"))

    for req in initial_requests:
        arrive(0.0, req)

    pending = sorted(enumerate(config.schedule),
                     key=lambda p: (p[1].time, EVENT_ORDER[p[1].kind], p[0]))
    pending = deque(ev for _, ev in pending)

    L = config.epoch_length
    end = config.horizon if config.horizon is not None else L
    delays: list[DelayRecord] = []
    util_rows: list[UtilizationRecord] = []
    util_acc = {n.id: 0.0 for n in state.base.nodes}
    total_time = 0.0
    for k in range(config.n_epochs):
        start = k * L
        length = min(L, end - start) if end > start else L
        while pending and pending[0].time <= start:
            ev = pending.popleft()
            if ev.kind == "depart":
                depart(start, ev.vn_id)
            elif ev.kind == "traffic":
                change(start, ev.vn_id, ev.traffic)
            else:
                arrive(start, ev.request)

        for node_id, u in utilization(state).items():
            util_rows.append(UtilizationRecord(k, start, node_id, u))
            util_acc[node_id] += u * length
        total_time += length

        for vn_id in sorted(requests):
            req, plan = requests[vn_id], plans[vn_id]
            flow = solve_traffic_equations(req.traffic)
            if not is_stable(flow, plan.mus):
                adm.append(AdmissionRecord(start, vn_id, "simulate", "skipped", "unstable"))
                continue
            analytic = mean_delay(flow, plan.mus).mean_system_delay
            ps = simulate_slice_packets(req, plan, length, slice_seed(config.rng_seed, vn_id, k),
                                        batches=config.batches, warmup=config.warmup)
            if ps.packets == 0:
                adm.append(AdmissionRecord(start, vn_id, "simulate", "skipped", "no packets"))
                continue
            delays.append(DelayRecord(k, start, vn_id, analytic, ps.mean_delay, ps.half_width, ps.packets))

    measured, analytic, half = {}, {}, {}
    for vn_id in sorted({d.vn_id for d in delays}):
        rows = [d for d in delays if d.vn_id == vn_id]
        total = sum(d.packets for d in rows)
        w = [d.packets / total for d in rows]
        if len(rows) == 1:
            measured[vn_id], analytic[vn_id], half[vn_id] = rows[0].measured, rows[0].analytic, rows[0].half_width
            continue
        measured[vn_id] = math.fsum(wi * d.measured for wi, d in zip(w, rows))
        analytic[vn_id] = math.fsum(wi * d.analytic for wi, d in zip(w, rows))
        half[vn_id] = math.sqrt(math.fsum((wi * d.half_width) ** 2 for wi, d in zip(w, rows)))

    return SimReport(
        per_vn_measured_delay=measured,
        per_vn_analytic_delay=analytic,
        confidence_half_width=half,
        admission_log=tuple(adm),
        utilization={k: v / total_time for k, v in util_acc.items()},
        epoch_utilization=tuple(util_rows),
        delays=tuple(delays),
    )
