"""Command-line entry point: ``sliceplan <subcommand> [options]``.

Exit codes: 0 success, 2 usage error, 3 scenario validation failure,
4 infeasible (unstable network or unsatisfiable latency bound).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .capacity import CapacityPlan, capacity_sweep
from .embedding import embed_max
from .errors import (ClosedNetworkError, DegenerateError, InfeasibleError, ParameterError,
                     ScenarioError, SearchTooLargeError, UnstableNetworkError)
from .model import PriceVector, case_study_topology
from .pricing import best_of, best_response, price_candidates, price_sweep_report
from .queueing import solve_traffic_equations
from .scenario import Scenario, load_scenario
from .simulator import EpochConfig, run_two_time_scale

log = logging.getLogger("sliceplan")

EXIT_OK, EXIT_USAGE, EXIT_SCENARIO, EXIT_INFEASIBLE = 0, 2, 3, 4

CAPACITY_COLUMNS = ["T_seconds", "node_id", "lambda", "mu_opt", "price", "node_cost",
                    "total_cost", "alpha"]
CASE_CAPACITY_COLUMNS = ["scenario"] + CAPACITY_COLUMNS
CASE_COST_COLUMNS = ["portfolio_id", "vn_id", "node_id", "T_seconds", "mu", "price", "node_cost",
                "total_cost"]
PRICE_GAME_COLUMNS = ["portfolio_id", "vn_id", "node_id", "mu", "node_cost",
                      "participant_flag", "revenue"]

DEFAULT_T_LIST = (0.001, 0.002, 0.005, 0.010, 0.020, 0.050, 0.100, 0.200, 0.500, 1.000)
PORTFOLIO_1 = PriceVector((0.8, 0.2, 0.05, 0.1))
PORTFOLIO_2 = PriceVector((0.5, 0.15, 0.1, 0.15))


@dataclass
class RunResult:
    exit_code: int
    artifacts: list[Path] = field(default_factory=list)


class _UsageError(Exception):
    pass


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return format(value, ".9g")
    return str(value)


def emit_plot_data(columns: Sequence[str], rows: Iterable[Sequence], path: str | Path) -> Path:
    """Write rows as CSV with a fixed column order and 9 significant digits."""
    rows = list(rows)
    if not rows:
        raise ParameterError(f"no rows to write to {path}")
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ParameterError(f"row has {len(row)} fields, expected {len(columns)}")
            w.writerow([_fmt(v) for v in row])
    return path


def _capacity_rows(request, plan: CapacityPlan, prices: PriceVector) -> list[list]:
    return [[plan.sla_latency, name, plan.lambdas[i], plan.mus[i], prices.prices[i],
             plan.per_node_cost[i], plan.total_cost, plan.kkt_multiplier]
            for i, name in enumerate(request.node_names)]


def _t_list(text: str | None, default=None) -> list[float]:
    if text is None:
        if default is None:
            raise _UsageError("--t-list is required")
        return list(default)
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise _UsageError(f"--t-list must be comma-separated seconds, got {text!r}") from None
    if not values:
        raise _UsageError("--t-list is empty")
    return values


def _scenario(args) -> Scenario:
    if not args.scenario:
        raise _UsageError("--scenario is required")
    path = Path(args.scenario)
    if not path.is_file():
        raise _UsageError(f"scenario file not found: {path}")
    return load_scenario(path)


def _need_prices(sc: Scenario) -> None:
    if sc.prices is None:
        raise ScenarioError("scenario needs a 'prices' section for this command")


# ------------------------------------------------------------- subcommands

def cmd_analyze(args, out: Path) -> list[Path]:
    sc = _scenario(args)
    rows = []
    for r in sc.vns:
        flow = solve_traffic_equations(r.traffic)
        print(f"{r.id}: lambda = ({', '.join(format(x, 'g') for x in flow.lambdas)})")
        for i, name in enumerate(r.node_names):
            rows.append([r.id, name, r.virtual_nodes[i].kind.value,
                         r.traffic.external_arrivals[i], flow.lambdas[i]])
    return [emit_plot_data(["vn_id", "node_id", "kind", "gamma", "lambda"], rows, out / "flows.csv")]


def cmd_optimize(args, out: Path) -> list[Path]:
    sc = _scenario(args)
    _need_prices(sc)
    paths = []
    for r in sc.vns:
        prices = sc.prices_for(r.id)
        plan = best_response(r, prices, headroom=sc.headroom)
        print(f"{r.id}: total cost {plan.total_cost:.6g}, mu = "
              f"({', '.join(format(m, '.6g') for m in plan.mus)})")
        paths.append(emit_plot_data(CAPACITY_COLUMNS, _capacity_rows(r, plan, prices),
                                    out / f"capacity_{r.id}.csv"))
    return paths


def cmd_sweep(args, out: Path) -> list[Path]:
    sc = _scenario(args)
    _need_prices(sc)
    ts = _t_list(args.t_list, DEFAULT_T_LIST)
    paths = []
    for r in sc.vns:
        prices = sc.prices_for(r.id)
        flow = solve_traffic_equations(r.traffic)
        plans = capacity_sweep(flow, prices, ts, headroom=sc.headroom)
        rows = [row for plan in plans for row in _capacity_rows(r, plan, prices)]
        paths.append(emit_plot_data(CAPACITY_COLUMNS, rows, out / f"sweep_{r.id}.csv"))
    return paths


def cmd_embed(args, out: Path) -> list[Path]:
    sc = _scenario(args)
    _need_prices(sc)
    pairs = [(r, best_response(r, sc.prices_for(r.id), headroom=sc.headroom)) for r in sc.vns]
    state, admitted = embed_max(sc.substrate, pairs, mode=args.mode, compatibility=sc.compatibility)
    print(f"admitted ({args.mode}): {', '.join(admitted) if admitted else '(none)'}")
    mapping_rows = []
    for vn_id in admitted:
        emb = state.active[vn_id]
        req = sc.request(vn_id)
        for i, s in enumerate(emb.node_map):
            print(f"  {vn_id}.{req.node_name(i)} -> {s}")
            mapping_rows.append([vn_id, req.node_name(i), s, emb.node_alloc[i]])
        for (a, b), path, bw in zip(req.virtual_links, emb.link_map, emb.link_alloc):
            vlink = f"{req.node_name(a)}--{req.node_name(b)}"
            print(f"  {vn_id}.{vlink} -> {' > '.join(path)}")
            mapping_rows.append([vn_id, vlink, ">".join(path), bw])
    nodes_alloc, links_alloc = state.allocated()
    res_rows = [["node", n.id, n.capacity, state.node_residual[n.id], nodes_alloc[n.id]]
                for n in state.base.nodes]
    res_rows += [["link", l.id, l.bandwidth, state.link_residual[l.id], links_alloc[l.id]]
                 for l in state.base.links]
    paths = [emit_plot_data(["element", "element_id", "capacity", "residual", "allocated"],
                            res_rows, out / "residuals.csv")]
    if mapping_rows:
        paths.append(emit_plot_data(["vn_id", "virtual_element", "substrate_element", "allocation"],
                                    mapping_rows, out / "mappings.csv"))
    return paths


def cmd_price_game(args, out: Path) -> list[Path]:
    sc = _scenario(args)
    if sc.portfolios:
        candidates = list(sc.portfolios)
    elif sc.price_grid:
        candidates = price_candidates(sc.price_grid)
    elif isinstance(sc.prices, PriceVector):
        candidates = [sc.prices]
    else:
        raise ScenarioError("price-game needs 'portfolios', 'price_grid' or a shared 'prices' vector")
    winner, outcomes = best_of(sc.substrate, sc.vns, candidates,
                               compatibility=sc.compatibility, headroom=sc.headroom)
    rows = []
    for pid, o in enumerate(outcomes, start=1):
        for r in sc.vns:
            plan = o.demands[r.id]
            for i, name in enumerate(r.node_names):
                rows.append([pid, r.id, name, plan.mus[i], plan.per_node_cost[i],
                             r.id in o.participants, o.revenue])
    best_id = outcomes.index(winner) + 1
    print(f"best portfolio {best_id}: prices {winner.prices.prices}, revenue {winner.revenue:.6g}, "
          f"participants {sorted(winner.participants)}")
    return [emit_plot_data(PRICE_GAME_COLUMNS, rows, out / "price_game.csv")]


def cmd_simulate(args, out: Path) -> list[Path]:
    sc = _scenario(args)
    _need_prices(sc)
    cfg = sc.schedule or EpochConfig(epoch_length=10.0)
    seed = args.seed if args.seed is not None else sc.seed
    cfg = EpochConfig(cfg.epoch_length, cfg.schedule, seed, cfg.horizon, cfg.batches, cfg.warmup)
    prices = {r.id: sc.prices_for(r.id) for r in sc.vns}
    report = run_two_time_scale(sc.substrate, cfg, sc.initial_requests, prices,
                                compatibility=sc.compatibility, headroom=sc.headroom, mode=args.mode)
    for vn_id, m in report.per_vn_measured_delay.items():
        print(f"{vn_id}: measured {m:.6g} s +/- {report.confidence_half_width[vn_id]:.3g}, "
              f"analytic {report.per_vn_analytic_delay[vn_id]:.6g} s")
    paths = []
    adm = [[a.time, a.vn_id, a.event, a.outcome, a.reason] for a in report.admission_log]
    if adm:
        paths.append(emit_plot_data(["time", "vn_id", "event", "outcome", "reason"], adm,
                                    out / "admissions.csv"))
    paths.append(emit_plot_data(["epoch", "start", "node_id", "utilization"],
                                [[u.epoch, u.start, u.node_id, u.utilization]
                                 for u in report.epoch_utilization], out / "utilization.csv"))
    if report.delays:
        paths.append(emit_plot_data(
            ["epoch", "start", "vn_id", "analytic_delay", "measured_delay", "ci_half_width", "packets"],
            [[d.epoch, d.start, d.vn_id, d.analytic, d.measured, d.half_width, d.packets]
             for d in report.delays], out / "delays.csv"))
    return paths


def case_study_requests() -> list:
    """The two slices of the reference case study: live video upload and monitoring."""
    return [case_study_topology(2000.0, 0.1, sla_latency=0.010, vn_id="video"),
            case_study_topology(50.0, 0.5, sla_latency=0.020, vn_id="monitoring")]


def cmd_reproduce(args, out: Path) -> list[Path]:
    ts = _t_list(args.t_list, DEFAULT_T_LIST)
    requests = case_study_requests()
    capacity_rows = []
    for r in requests:
        flow = solve_traffic_equations(r.traffic)
        for plan in capacity_sweep(flow, PORTFOLIO_1, ts):
            capacity_rows += [[r.id] + row for row in _capacity_rows(r, plan, PORTFOLIO_1)]
    cost_rows = [[c.portfolio_id, c.vn_id, c.node_id, c.sla_latency, c.mu, c.price, c.node_cost, c.total_cost]
            for c in price_sweep_report(requests, [PORTFOLIO_1, PORTFOLIO_2])]
    return [emit_plot_data(CASE_CAPACITY_COLUMNS, capacity_rows, out / "case_study_capacity.csv"),
            emit_plot_data(CASE_COST_COLUMNS, cost_rows, out / "case_study_cost.csv")]


COMMANDS = {
    "analyze": (cmd_analyze, "solve the traffic equations of every slice"),
    "optimize-capacity": (cmd_optimize, "cost-minimal service rates at each slice's latency bound"),
    "sweep": (cmd_sweep, "optimal service rates over a list of latency bounds"),
    "embed": (cmd_embed, "size and embed all slices, maximising the number admitted"),
    "price-game": (cmd_price_game, "provider price search against slice best responses"),
    "simulate": (cmd_simulate, "two-time-scale epoch and packet simulation"),
    "reproduce-case-study": (cmd_reproduce, "regenerate the case-study capacity and cost tables"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sliceplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", help="scenario file (YAML or JSON)")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--mode", choices=("exact", "greedy"), default="exact")
        p.add_argument("--t-list", dest="t_list", help="comma-separated latency bounds in seconds")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(argv: Sequence[str] | None = None) -> RunResult:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"sliceplan: {exc}", file=sys.stderr)
        return RunResult(EXIT_USAGE)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler, _ = COMMANDS[args.command]
    out = Path(args.out)
    try:
        if args.command != "reproduce-case-study":
            _scenario(args)  # fail on a missing file before touching the output directory
        out.mkdir(parents=True, exist_ok=True)
        artifacts = handler(args, out)
    except (_UsageError, SearchTooLargeError, ParameterError, OSError) as exc:
        print(f"sliceplan: {exc}", file=sys.stderr)
        return RunResult(EXIT_USAGE)
    except ScenarioError as exc:
        for v in exc.violations:
            print(f"sliceplan: invalid scenario: {v}", file=sys.stderr)
        return RunResult(EXIT_SCENARIO)
    except (UnstableNetworkError, InfeasibleError, DegenerateError, ClosedNetworkError) as exc:
        print(f"sliceplan: infeasible: {exc}", file=sys.stderr)
        return RunResult(EXIT_INFEASIBLE)
    for p in artifacts:
        print(f"wrote {p}")
    return RunResult(EXIT_OK, artifacts)


def main(argv: Sequence[str] | None = None) -> None:
    sys.exit(run(argv).exit_code)
