"""Scenario documents (YAML, or JSON as its subset).

One document describes the substrate, the slice requests, prices and an
optional event schedule. Unknown keys are rejected. See README.md for the
frozen field list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ParameterError, ScenarioError
from .model import (Compatibility, NodeKind, PriceVector, SubstrateLink, SubstrateNetwork,
                    SubstrateNode, TrafficModel, VirtualNode, VnRequest, case_study_topology,
                    validate_request, validate_substrate)
from .simulator import EpochConfig, ScheduledEvent

TOP_KEYS = {"name", "seed", "substrate", "vns", "prices", "schedule", "compatibility",
            "headroom", "price_grid", "portfolios"}
SUBSTRATE_KEYS = {"nodes", "links"}
NODE_KEYS = {"id", "kind", "capacity", "residual"}
LINK_KEYS = {"endpoints", "bandwidth", "residual"}
VN_KEYS = {"id", "nodes", "links", "arrivals", "routing", "packet_size", "sla_latency",
           "budget", "priority", "consume_bandwidth", "case_study"}
VNODE_KEYS = {"kind", "name", "capacity"}
CASE_KEYS = {"lambda", "q"}
SCHEDULE_KEYS = {"epoch_length", "horizon", "events"}
EVENT_KEYS = {"time", "type", "vn", "arrivals", "routing", "packet_size"}


@dataclass
class Scenario:
    substrate: SubstrateNetwork
    vns: list[VnRequest]
    prices: PriceVector | dict[str, PriceVector] | None = None
    schedule: EpochConfig | None = None
    name: str = ""
    seed: int = 0
    compatibility: Compatibility = field(default_factory=Compatibility)
    headroom: float = 0.0
    price_grid: list[list[float]] | None = None
    portfolios: list[PriceVector] | None = None

    def request(self, vn_id: str) -> VnRequest:
        for r in self.vns:
            if r.id == vn_id:
                return r
        raise KeyError(vn_id)

    def prices_for(self, vn_id: str) -> PriceVector:
        if self.prices is None:
            raise ScenarioError("scenario has no prices")
        if isinstance(self.prices, dict):
            return self.prices[vn_id]
        return self.prices

    @property
    def initial_requests(self) -> list[VnRequest]:
        """Slices present at time zero: all except those with a scheduled arrival."""
        later = {e.vn_id for e in (self.schedule.schedule if self.schedule else ()) if e.kind == "arrive"}
        return [r for r in self.vns if r.id not in later]


class _Errors:
    def __init__(self):
        self.items: list[str] = []

    def keys(self, where: str, obj: Any, allowed: set, required: set = frozenset()) -> bool:
        if not isinstance(obj, dict):
            self.items.append(f"{where}: expected a mapping")
            return False
        for k in sorted(set(obj) - allowed, key=str):
            self.items.append(f"{where}: unknown key {k!r}")
        for k in sorted(required - set(obj)):
            self.items.append(f"{where}: missing key {k!r}")
        return required <= set(obj)


def _kind(value, where: str, errs: _Errors) -> NodeKind | None:
    try:
        return NodeKind(value)
    except ValueError:
        errs.items.append(f"{where}: unknown kind {value!r}")
        return None


def _num(value, where: str, errs: _Errors) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errs.items.append(f"{where}: expected a number, got {value!r}")
        return math.nan
    return float(value)


def _int(value, where: str, errs: _Errors) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        errs.items.append(f"{where}: expected an integer, got {value!r}")
        return 0
    return value


def _flag(value, where: str, errs: _Errors) -> bool:
    if not isinstance(value, bool):
        errs.items.append(f"{where}: expected true or false, got {value!r}")
    return bool(value)


def _seq(value, where: str, errs: _Errors) -> list:
    if value is None:
        return []
    if not isinstance(value, (list, tuple)):
        errs.items.append(f"{where}: expected a list")
        return []
    return list(value)


def _traffic(d: dict, where: str, errs: _Errors) -> TrafficModel | None:
    try:
        return TrafficModel(tuple(d["arrivals"]), tuple(tuple(r) for r in d["routing"]),
                            float(d.get("packet_size", 1e6)))
    except (TypeError, ValueError) as exc:
        errs.items.append(f"{where}: bad traffic ({exc})")
        return None


def _parse_vn(d: dict, idx: int, errs: _Errors) -> VnRequest | None:
    where = f"vns[{idx}]"
    if not errs.keys(where, d, VN_KEYS, {"id", "sla_latency"}):
        return None
    common = dict(
        sla_latency=_num(d["sla_latency"], f"{where}.sla_latency", errs),
        budget=_num(d.get("budget", math.inf), f"{where}.budget", errs),
        priority=_int(d.get("priority", 0), f"{where}.priority", errs),
    )
    vn_id = str(d["id"])
    if "case_study" in d:
        clash = {"nodes", "links", "arrivals", "routing"} & set(d)
        if clash:
            errs.items.append(f"{where}: case_study excludes {sorted(clash)}")
            return None
        cs = d["case_study"]
        if not errs.keys(f"{where}.case_study", cs, CASE_KEYS, CASE_KEYS):
            return None
        lam = _num(cs["lambda"], f"{where}.case_study.lambda", errs)
        q = _num(cs["q"], f"{where}.case_study.q", errs)
        try:
            req = case_study_topology(lam, q, vn_id=vn_id, **common)
        except ParameterError as exc:
            errs.items.append(f"{where}.case_study: {exc}")
            return None
        if "packet_size" in d:
            size = _num(d["packet_size"], f"{where}.packet_size", errs)
            req = replace(req, traffic=replace(req.traffic, mean_packet_size=size))
        if "consume_bandwidth" in d:
            req = replace(req, consume_bandwidth=_flag(d["consume_bandwidth"], f"{where}.consume_bandwidth", errs))
        return req
    if not errs.keys(where, d, VN_KEYS, {"nodes", "links", "arrivals", "routing"}):
        return None
    nodes = []
    for j, nd in enumerate(_seq(d["nodes"], f"{where}.nodes", errs)):
        w = f"{where}.nodes[{j}]"
        if not errs.keys(w, nd, VNODE_KEYS, {"kind"}):
            continue
        cap = nd.get("capacity")
        nodes.append(VirtualNode(_kind(nd["kind"], w, errs),
                                 None if cap is None else _num(cap, f"{w}.capacity", errs),
                                 None if nd.get("name") is None else str(nd["name"])))
    traffic = _traffic(d, where, errs)
    if traffic is None:
        return None
    try:
        links = tuple((int(a), int(b)) for a, b in d["links"])
    except (TypeError, ValueError):
        errs.items.append(f"{where}.links: expected index pairs")
        return None
    return VnRequest(vn_id, tuple(nodes), links, traffic,
                     consume_bandwidth=_flag(d.get("consume_bandwidth", True), f"{where}.consume_bandwidth", errs),
                     **common)


def _price_vector(value, where: str, errs: _Errors) -> PriceVector | None:
    try:
        return PriceVector(tuple(float(p) for p in value))
    except (TypeError, ValueError) as exc:
        errs.items.append(f"{where}: {exc}")
        return None


def parse_scenario(doc: Any) -> Scenario:
    """Build and validate a :class:`Scenario` from a parsed document."""
    errs = _Errors()
    if not errs.keys("scenario", doc, TOP_KEYS, {"substrate", "vns"}):
        raise ScenarioError(errs.items)

    sub = doc["substrate"]
    nodes, links = [], []
    if errs.keys("substrate", sub, SUBSTRATE_KEYS, {"nodes"}):
        for i, nd in enumerate(_seq(sub["nodes"], "substrate.nodes", errs)):
            w = f"substrate.nodes[{i}]"
            if errs.keys(w, nd, NODE_KEYS, {"id", "kind", "capacity"}):
                cap = _num(nd["capacity"], f"{w}.capacity", errs)
                res = nd.get("residual")
                nodes.append(SubstrateNode(str(nd["id"]), _kind(nd["kind"], w, errs), cap,
                                           None if res is None else _num(res, f"{w}.residual", errs)))
        for i, ld in enumerate(_seq(sub.get("links"), "substrate.links", errs)):
            w = f"substrate.links[{i}]"
            if errs.keys(w, ld, LINK_KEYS, {"endpoints"}):
                ep = ld["endpoints"]
                if not isinstance(ep, (list, tuple)) or len(ep) != 2:
                    errs.items.append(f"{w}.endpoints: expected two node ids")
                    continue
                bw = _num(ld.get("bandwidth", math.inf), f"{w}.bandwidth", errs)
                res = ld.get("residual")
                links.append(SubstrateLink((str(ep[0]), str(ep[1])), bw,
                                           None if res is None else _num(res, f"{w}.residual", errs)))
    substrate = SubstrateNetwork(tuple(nodes), tuple(links))
    if not errs.items:
        errs.items.extend(validate_substrate(substrate))

    vns = []
    for i, d in enumerate(_seq(doc["vns"], "vns", errs)):
        r = _parse_vn(d, i, errs)
        if r is not None:
            vns.append(r)
            errs.items.extend(validate_request(r))
    ids = [r.id for r in vns]
    if len(set(ids)) != len(ids):
        errs.items.append("vns: duplicate ids")
    sizes = {r.id: r.size for r in vns}

    seed = _int(doc.get("seed", 0), "seed", errs)
    prices = None
    if doc.get("prices") is not None:
        raw = doc["prices"]
        if isinstance(raw, dict):
            prices = {}
            for k, v in raw.items():
                if str(k) not in sizes:
                    errs.items.append(f"prices: unknown vn {k!r}")
                pv = _price_vector(v, f"prices.{k}", errs)
                if pv is not None:
                    prices[str(k)] = pv
            for vn_id in sizes:
                if vn_id not in prices:
                    errs.items.append(f"prices: no entry for vn {vn_id!r}")
        else:
            prices = _price_vector(raw, "prices", errs)
        for vn_id, n in sizes.items():
            pv = prices.get(vn_id) if isinstance(prices, dict) else prices
            if pv is not None and len(pv) != n:
                errs.items.append(f"prices: vn {vn_id!r} has {n} nodes but {len(pv)} prices")

    compat = Compatibility()
    if doc.get("compatibility") is not None:
        raw = doc["compatibility"]
        if not isinstance(raw, dict):
            errs.items.append("compatibility: expected a mapping")
        else:
            allowed = {}
            for k, v in raw.items():
                vk = _kind(k, "compatibility", errs)
                hosts = [_kind(x, f"compatibility.{k}", errs) for x in _seq(v, f"compatibility.{k}", errs)]
                if vk is not None and None not in hosts:
                    allowed[vk] = frozenset(hosts)
            compat = Compatibility(allowed)

    grid = None
    if doc.get("price_grid") is not None:
        try:
            grid = [[float(p) for p in axis] for axis in doc["price_grid"]]
        except (TypeError, ValueError):
            errs.items.append("price_grid: expected a list of per-node price lists")
        else:
            if any(not axis or any(not p > 0 for p in axis) for axis in grid):
                errs.items.append("price_grid: every axis needs positive candidates")
    portfolios = None
    if doc.get("portfolios") is not None:
        portfolios = [pv for i, v in enumerate(_seq(doc["portfolios"], "portfolios", errs))
                      if (pv := _price_vector(v, f"portfolios[{i}]", errs)) is not None]

    schedule = None
    if doc.get("schedule") is not None:
        schedule = _parse_schedule(doc["schedule"], {r.id: r for r in vns}, seed, errs)

    headroom = _num(doc.get("headroom", 0.0), "headroom", errs)
    if not headroom >= 0:
        errs.items.append("headroom: must be non-negative")
    if errs.items:
        raise ScenarioError(errs.items)
    return Scenario(substrate, vns, prices, schedule, str(doc.get("name", "")),
                    seed, compat, headroom, grid, portfolios)


def _parse_schedule(d, vns: dict[str, VnRequest], seed, errs: _Errors) -> EpochConfig | None:
    if not errs.keys("schedule", d, SCHEDULE_KEYS, {"epoch_length"}):
        return None
    events = []
    for i, ev in enumerate(_seq(d.get("events"), "schedule.events", errs)):
        w = f"schedule.events[{i}]"
        if not errs.keys(w, ev, EVENT_KEYS, {"time", "type", "vn"}):
            continue
        kind, vn_id = ev["type"], str(ev["vn"])
        if vn_id not in vns:
            errs.items.append(f"{w}: unknown vn {vn_id!r}")
            continue
        extra = {"arrivals", "routing", "packet_size"} & set(ev)
        if kind == "traffic":
            if not {"arrivals", "routing"} <= extra:
                errs.items.append(f"{w}: traffic change needs arrivals and routing")
                continue
            tm = _traffic(ev, w, errs)
            if tm is not None:
                bad = tm.violations()
                if tm.size != vns[vn_id].size:
                    bad.append(f"expected {vns[vn_id].size} nodes")
                errs.items.extend(f"{w}: {b}" for b in bad)
            events.append(ScheduledEvent(_num(ev["time"], f"{w}.time", errs), kind, vn_id, traffic=tm))
        elif kind in ("arrive", "depart"):
            if extra:
                errs.items.append(f"{w}: {kind} takes no traffic fields")
            events.append(ScheduledEvent(_num(ev["time"], f"{w}.time", errs), kind, vn_id,
                                         request=vns[vn_id] if kind == "arrive" else None))
        else:
            errs.items.append(f"{w}: unknown type {kind!r}")
    horizon = d.get("horizon")
    cfg = EpochConfig(_num(d["epoch_length"], "schedule.epoch_length", errs), tuple(events),
                      seed, None if horizon is None else _num(horizon, "schedule.horizon", errs))
    if not errs.items:
        try:
            cfg.validate()
        except ParameterError as exc:
            errs.items.append(f"schedule: {exc}")
    return cfg


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: not a valid YAML/JSON document ({exc})") from exc
    return parse_scenario(doc)


# ---------------------------------------------------------------- serialising

def _opt_num(x: float):
    return None if x is None or math.isinf(x) else x


def _traffic_dict(t: TrafficModel) -> dict:
    return {"arrivals": list(t.external_arrivals), "routing": [list(r) for r in t.routing],
            "packet_size": t.mean_packet_size}


def scenario_to_dict(sc: Scenario) -> dict:
    """Inverse of :func:`parse_scenario` (always writes the expanded slice form)."""
    nodes = []
    for n in sc.substrate.nodes:
        d = {"id": n.id, "kind": n.kind.value, "capacity": n.capacity}
        if n.residual != n.capacity:
            d["residual"] = n.residual
        nodes.append(d)
    links = []
    for l in sc.substrate.links:
        d = {"endpoints": list(l.endpoints)}
        if l.constrained:
            d["bandwidth"] = l.bandwidth
            if l.residual_bandwidth != l.bandwidth:
                d["residual"] = l.residual_bandwidth
        links.append(d)
    vns = []
    for r in sc.vns:
        d = {"id": r.id, "nodes": [], "links": [list(l) for l in r.virtual_links]}
        for vn in r.virtual_nodes:
            nd = {"kind": vn.kind.value}
            if vn.name is not None:
                nd["name"] = vn.name
            if vn.fixed_capacity is not None:
                nd["capacity"] = vn.fixed_capacity
            d["nodes"].append(nd)
        d.update(_traffic_dict(r.traffic))
        d["sla_latency"] = r.sla_latency
        if _opt_num(r.budget) is not None:
            d["budget"] = r.budget
        d["priority"] = r.priority
        d["consume_bandwidth"] = r.consume_bandwidth
        vns.append(d)
    out: dict = {"name": sc.name, "seed": sc.seed,
                 "substrate": {"nodes": nodes, "links": links}, "vns": vns}
    if isinstance(sc.prices, dict):
        out["prices"] = {k: list(v.prices) for k, v in sorted(sc.prices.items())}
    elif sc.prices is not None:
        out["prices"] = list(sc.prices.prices)
    if sc.compatibility.allowed:
        out["compatibility"] = {k.value: sorted(h.value for h in v)
                                for k, v in sorted(sc.compatibility.allowed.items())}
    if sc.headroom:
        out["headroom"] = sc.headroom
    if sc.price_grid is not None:
        out["price_grid"] = [list(a) for a in sc.price_grid]
    if sc.portfolios is not None:
        out["portfolios"] = [list(p.prices) for p in sc.portfolios]
    if sc.schedule is not None:
        s = sc.schedule
        events = []
        for e in s.schedule:
            ed = {"time": e.time, "type": e.kind, "vn": e.vn_id}
            if e.traffic is not None:
                ed.update(_traffic_dict(e.traffic))
            events.append(ed)
        sd = {"epoch_length": s.epoch_length, "events": events}
        if s.horizon is not None:
            sd["horizon"] = s.horizon
        out["schedule"] = sd
    return out


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False)
