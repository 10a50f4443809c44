"""Batch experiment runner.

Subcommands::

    elrp solve       one bilevel solve; writes solution.csv, summary.csv,
                     iterations.csv and solution.png
    elrp sweep       service-fee sweep; writes sweep.csv and sweep.png,
                     including the single-entity comparator split
    elrp rates       charging-rate study at one station; writes rates.csv
                     and rates.png
    elrp oracle-check  compares the solver against brute-force enumeration
    elrp dump-graph  prints the expanded network in a line-oriented format

Exit codes: 0 ok, 1 solver error, 2 usage or I/O error.  The ``ELRP_LOG``
environment variable sets the log level (e.g. DEBUG, INFO).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import ccg as ccg_mod
from . import oracle as oracle_mod
from . import plots
from .evaluate import FleetPlan, capex_cost, csp_cost, fo_cost
from .instance import Instance, ParseError, ValidationError, load_instance, with_overrides
from .pten import dump_text, expand

log = logging.getLogger("elrp.cli")

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_USAGE = 2

# sweep grid: 0.00..0.50 step 0.05 plus reported break-even fees
DEFAULT_FEES = sorted(set(round(0.05 * i, 6) for i in range(11)) | {0.125, 0.1684, 0.25, 0.421})


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _write_csv(path: Path, fieldnames: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(row.get(k, "")) for k in fieldnames])


def _strategy_signature(plan: FleetPlan) -> str:
    text = ";".join("|".join(map(str, sig)) for sig in plan.signature())
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _load(args) -> Instance:
    inst = load_instance(args.instance)
    if getattr(args, "fee", None) is not None:
        inst = with_overrides(inst, service_fee=args.fee)
    return inst


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _solution_rows(plan: FleetPlan, instance: Instance, graph) -> list[dict]:
    rows = []
    ports = plan.port_assignments()
    for idx, route in enumerate(plan.routes):
        for seq, visit in enumerate(route.visits):
            dummy = graph.dummies.get(visit.node)
            rows.append({
                "route": idx, "vehicle_type": route.vehicle_type, "seq": seq,
                "node": dummy.station if dummy else visit.node,
                "kind": graph.kind(visit.node),
                "arrival": visit.arrival,
                "load_after": visit.load_after,
                "battery_after": visit.energy_after,
                "port": ports.get((idx, dummy.station, dummy.time_tracker), "") if dummy else "",
            })
    return rows


def run_solve(args) -> int:
    inst = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph = expand(inst)
    trace_sink = [] if args.trace else None
    result = ccg_mod.run_ccg(inst, epsilon=args.epsilon, graph=graph,
                             stabilize=args.stabilize, trace_sink=trace_sink)
    plan, decision = result.plan, result.decision
    eco = inst.economics

    _write_csv(out / "solution.csv",
               ["route", "vehicle_type", "seq", "node", "kind", "arrival",
                "load_after", "battery_after", "port"],
               _solution_rows(plan, inst, graph))

    summary = {
        "instance": inst.name,
        "LB": result.lb, "UB": result.ub,
        "csp_cost": csp_cost(decision, plan, eco, inst),
        "fo_cost": fo_cost(plan, eco),
        "stations_built": "+".join(s for s in inst.station_ids() if decision.build[s]) or "none",
        "iterations": result.iterations,
        "total_energy": plan.total_energy(),
    }
    for s in inst.station_ids():
        summary[f"ports_{s}"] = decision.ports[s]
        summary[f"upgrade_kw_{s}"] = decision.upgrade[s]
        summary[f"fee_{s}"] = eco.service_fee[s]
    for vt in inst.vehicle_types:
        summary[f"fleet_type{vt.id}"] = plan.fleet_counts().get(vt.id, 0)
    _write_csv(out / "summary.csv", list(summary), [summary])

    _write_csv(out / "iterations.csv",
               ["iter", "LB", "UB", "gap", "n_scenarios", "sp2_feasible"],
               result.log_rows)
    if trace_sink is not None and trace_sink:
        fields = ["stage", "outer_iter"] + [k for k in trace_sink[0]
                                            if k not in ("stage", "outer_iter")]
        seen_fields = list(dict.fromkeys(
            fields + [k for row in trace_sink for k in row]))
        _write_csv(out / "colgen_iterations.csv", seen_fields, trace_sink)
    plots.solution_timeline_figure(plan, inst, out / "solution.png",
                                   title=f"{inst.name}: optimal routes")
    print(f"solved {inst.name}: UB={result.ub:.6f} LB={result.lb:.6f} "
          f"iterations={result.iterations} -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fee sweep
# ---------------------------------------------------------------------------

def _sweep_point(payload) -> dict:
    path, fee, epsilon = payload
    inst = with_overrides(load_instance(path), service_fee=fee)
    graph = expand(inst)
    eco = inst.economics
    row = {"fee": fee, "errors": ""}
    try:
        result = ccg_mod.run_ccg(inst, epsilon=epsilon, graph=graph)
        plan, decision = result.plan, result.decision
        row.update({
            "fo_cost": fo_cost(plan, eco),
            "fo_fleet_cost": sum(r.cost_vehicle for r in plan.routes),
            "csp_cost": result.ub,
            "csp_profit": -result.ub,
            "csp_capex": capex_cost(decision, inst),
            "csp_revenue": sum(r.revenue_csp for r in plan.routes),
            "total": fo_cost(plan, eco) + result.ub,
            "stations_built": "+".join(s for s in inst.station_ids()
                                       if decision.build[s]) or "none",
            "total_energy_sold": plan.total_energy(),
            "strategy": _strategy_signature(plan),
        })
    except Exception as exc:   # per-point failures recorded, sweep continues
        row["errors"] = f"{type(exc).__name__}: {exc}"
        return row
    try:
        sdec, splan = ccg_mod.solve_single_entity(inst, graph)
        s_fo = fo_cost(splan, eco)
        s_csp = csp_cost(sdec, splan, eco, inst)
        row.update({"single_fo_cost": s_fo, "single_csp_cost": s_csp,
                    "single_total": s_fo + s_csp,
                    "single_strategy": _strategy_signature(splan)})
    except Exception as exc:
        row["errors"] = f"single_entity {type(exc).__name__}: {exc}"
    return row


SWEEP_FIELDS = ["fee", "fo_cost", "fo_fleet_cost", "csp_cost", "csp_profit",
                "csp_capex", "csp_revenue", "total", "stations_built",
                "total_energy_sold", "strategy",
                "single_fo_cost", "single_csp_cost", "single_total",
                "single_strategy", "errors"]


def run_sweep(args) -> int:
    fees = _parse_fees(args.fees) if args.fees else list(DEFAULT_FEES)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payloads = [(args.instance, fee, args.epsilon) for fee in fees]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, payloads))
    else:
        rows = [_sweep_point(p) for p in payloads]
    _write_csv(out / "sweep.csv", SWEEP_FIELDS, rows)
    plots.fee_sweep_figure([r for r in rows if not r["errors"]], out / "sweep.png",
                           title=f"{Path(args.instance).stem}: cost vs service fee")
    bad = [r for r in rows if r["errors"]]
    print(f"sweep over {len(fees)} fees -> {out} ({len(bad)} point errors)")
    return EXIT_OK if not bad else EXIT_SOLVER


def _parse_fees(text: str) -> list[float]:
    # "a:b:step" or comma-separated list
    if ":" in text:
        a, b, step = (float(x) for x in text.split(":"))
        if step <= 0 or b < a:
            raise ValueError(f"bad fee grid {text!r}")
        fees, v = [], a
        while v <= b + 1e-12:
            fees.append(round(v, 9))
            v += step
    else:
        fees = [float(x) for x in text.split(",")]
    if any(f < 0 or f > 10 for f in fees):
        raise ValueError(f"fees must lie in [0, 10], got {text!r}")
    return fees


# ---------------------------------------------------------------------------
# charging-rate study
# ---------------------------------------------------------------------------

RATES_FIELDS = ["rate", "fo_cost", "fo_fleet_cost", "fo_travel_cost", "fo_charging_cost",
                "csp_cost", "csp_profit", "csp_capex", "csp_revenue",
                "stations_built", "total_energy_sold", "strategy", "errors"]


def run_rates(args) -> int:
    inst0 = load_instance(args.instance)
    station = args.station or inst0.station_ids()[-1]
    if station not in inst0.station_ids():
        print(f"error: unknown station {station!r}", file=sys.stderr)
        return EXIT_USAGE
    rates = [float(x) for x in args.rates.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for rate in rates:
        row = {"rate": rate, "errors": ""}
        try:
            inst = with_overrides(inst0, rated_power={station: rate})
            if args.fee is not None:
                inst = with_overrides(inst, service_fee=args.fee)
            graph = expand(inst)
            result = ccg_mod.run_ccg(inst, epsilon=args.epsilon, graph=graph)
            plan, decision = result.plan, result.decision
            eco = inst.economics
            revenue = sum(r.revenue_csp for r in plan.routes)
            row.update({
                "fo_cost": fo_cost(plan, eco),
                "fo_fleet_cost": sum(r.cost_vehicle for r in plan.routes),
                "fo_travel_cost": sum(r.cost_travel for r in plan.routes),
                "fo_charging_cost": sum(r.cost_charging for r in plan.routes),
                "csp_cost": result.ub,
                "csp_profit": -result.ub,
                "csp_capex": capex_cost(decision, inst),
                "csp_revenue": revenue,
                "stations_built": "+".join(s for s in inst.station_ids()
                                           if decision.build[s]) or "none",
                "total_energy_sold": plan.total_energy(),
                "strategy": _strategy_signature(plan),
            })
        except Exception as exc:
            row["errors"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    _write_csv(out / "rates.csv", RATES_FIELDS, rows)
    plots.rate_study_figure([r for r in rows if not r["errors"]], out / "rates.png",
                            title=f"{inst0.name}: varying {station} charge rate")
    bad = [r for r in rows if r["errors"]]
    print(f"rate study over {rates} at {station} -> {out} ({len(bad)} point errors)")
    return EXIT_OK if not bad else EXIT_SOLVER


# ---------------------------------------------------------------------------
# oracle check
# ---------------------------------------------------------------------------

def run_oracle_check(args) -> int:
    inst = _load(args)
    graph = expand(inst)
    result = ccg_mod.run_ccg(inst, epsilon=args.epsilon, graph=graph)
    odec, oplan, oleader = oracle_mod.bilevel_exhaustive(inst, graph)
    ok = abs(result.ub - oleader) <= 1e-6
    print(f"solver leader cost : {result.ub:.6f}")
    print(f"oracle leader cost : {oleader:.6f}")
    print(f"oracle-check {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_SOLVER


def run_dump_graph(args) -> int:
    inst = _load(args)
    sys.stdout.write(dump_text(expand(inst)))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elrp",
                                     description="charging-network and e-truck fleet planner")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fee=True):
        p.add_argument("--instance", required=True, help="instance file path")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--epsilon", type=float, default=None,
                       help="bound-gap tolerance (default adaptive)")
        p.add_argument("--trace", action="store_true", help="verbose solver logging")
        if fee:
            p.add_argument("--fee", type=float, default=None,
                           help="override the service fee at every station")

    p = sub.add_parser("solve", help="single bilevel solve")
    common(p)
    p.add_argument("--stabilize", action="store_true",
                   help="BOXSTEP dual stabilization in the masters")
    p.set_defaults(func=run_solve)

    p = sub.add_parser("sweep", help="service-fee sweep")
    common(p, fee=False)
    p.add_argument("--fees", default=None,
                   help="fee grid 'a:b:step' or comma list (default 0:0.5:0.05 plus break-evens)")
    p.add_argument("--jobs", type=int, default=1, help="concurrent sweep points")
    p.set_defaults(func=run_sweep)

    p = sub.add_parser("rates", help="charging-rate study")
    common(p)
    p.add_argument("--rates", default="10,15,20", help="comma list of rated powers (kW)")
    p.add_argument("--station", default=None, help="station to vary (default: last)")
    p.set_defaults(func=run_rates)

    p = sub.add_parser("oracle-check", help="compare against brute-force enumeration")
    common(p)
    p.set_defaults(func=run_oracle_check)

    p = sub.add_parser("dump-graph", help="print the expanded network")
    common(p, fee=False)
    p.set_defaults(func=run_dump_graph)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("ELRP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(name)s %(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "trace", False):
        logging.getLogger("elrp").setLevel(logging.INFO)
    try:
        return args.func(args)
    except (OSError, ParseError, ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.exception("solver failure")
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
