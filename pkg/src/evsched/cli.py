"""Command-line entry point: run scheduling models, compare issues, render charts.

Exit codes: 0 success, 1 input/validation error, 2 infeasible model.
CSV outputs use a fixed column order and dot-decimal formatting so repeated
runs with identical inputs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import math
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__, charts, evba, evca
from .experiments import METRIC_FIELDS, issue_report
from .mobility import InfeasibleMobility
from .scenario import (
    CostOptions,
    Scenario,
    ScenarioError,
    builtin_illustrative,
    canonical_hash,
    load_scenario,
)
from .settlement import CostBreakdown, DeliveryResult, settle, simulate_delivery

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; keep 2 for infeasibility only
        self.print_usage(sys.stderr)
        raise _CliInputError(message)


class _CliInputError(ValueError):
    pass


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def _load(arg: str) -> Scenario:
    if arg == "builtin":
        return builtin_illustrative()
    return load_scenario(arg)


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _schedule_table(
    scenario: Scenario,
    flows,
    delivery: DeliveryResult,
    soe_by_ev: dict[str, np.ndarray],
) -> list[list[str]]:
    T = scenario.time_grid.horizon_steps
    sched: dict[tuple[str, int], list[float]] = {}
    for f in flows:
        row = sched.setdefault((f.ev_id, f.t), [0.0, 0.0, 0.0])
        row[0] += f.e_sch
        row[1] += f.e_dch
        row[2] += f.e_fch
    delivered = delivery.net_by_ev_step("delivered")
    imbalance = delivery.imbalance_by_ev_step()
    rows = []
    for ev in scenario.evs:
        for t in range(T):
            e_sch, e_dch, e_fch = sched.get((ev.id, t), [0.0, 0.0, 0.0])
            rows.append(
                [
                    ev.id,
                    str(t),
                    _fmt(e_sch),
                    _fmt(e_dch),
                    _fmt(e_fch),
                    _fmt(float(soe_by_ev[ev.id][t])),
                    _fmt(delivered.get((ev.id, t), 0.0)),
                    _fmt(imbalance.get((ev.id, t), 0.0)),
                ]
            )
    return rows


def cmd_run(args) -> int:
    scenario = _load(args.scenario)
    options = CostOptions()
    obc_known = args.obc_known == "true"
    noise = args.noise == "on"

    if args.model == "evba":
        fleet = evba.optimize_fleet(scenario, options)
        flows = fleet.flows(scenario)
        soe_by_ev = {s.ev_id: s.soe for s in fleet.schedules}
    elif args.model == "central":
        schedules = evca.optimize_central(scenario, options)
        flows = []
        for s in schedules:
            flows.extend(s.flows(scenario.itinerary(s.ev_id)))
        soe_by_ev = {s.ev_id: s.soe for s in schedules}
    else:
        plan = evca.plan_evca(
            scenario,
            boundary_policy=args.boundary,
            issue3_obc_known=obc_known,
            noise=noise,
            seed=args.seed,
            options=options,
        )
        flows = plan.flows()
        soe_by_ev = None  # filled with the simulated true SOE below

    delivery = simulate_delivery(flows, scenario)
    breakdown = settle(delivery, scenario.price_curve, scenario, options)
    if soe_by_ev is None:
        soe_by_ev = delivery.true_soe

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(
        out / "schedule.csv",
        ["entity_id", "t", "e_sch_kwh", "e_dch_kwh", "e_fch_kwh", "soe_kwh", "delivered_kwh", "imbalance_kwh"],
        _schedule_table(scenario, flows, delivery, soe_by_ev),
    )
    _write_csv(
        out / "summary.csv",
        ["field", "value"],
        [[name, _fmt(value)] for name, value in breakdown.as_rows()],
    )
    manifest = {
        "command": shlex.join(sys.argv),
        "scenario": args.scenario,
        "scenario_sha256": canonical_hash(scenario),
        "config": {
            "model": args.model,
            "boundary": args.boundary,
            "obc_known": obc_known,
            "noise": noise,
            "seed": args.seed,
        },
        "tool_version": __version__,
        "created_utc": dt.datetime.now(dt.timezone.utc).isoformat(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {out/'schedule.csv'}, {out/'summary.csv'}, {out/'manifest.json'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario = _load(args.scenario)
    try:
        issues = [int(s) for s in args.issues.split(",") if s.strip()]
    except ValueError as exc:
        raise _CliInputError(f"unknown issue id in {args.issues!r}") from exc
    for k in issues:
        if k not in (1, 2, 3, 4):
            raise _CliInputError(f"unknown issue id {k}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["variant", "seed"] + list(METRIC_FIELDS)
    comparison_rows: list[list[str]] = []
    for k in issues:
        report = issue_report(scenario, k, num_seeds=args.seeds, base_seed=args.seed)
        rows: list[list[str]] = []
        for name, cr in report.variants.items():
            for r in cr.rows:
                rows.append([name, str(r.seed)] + [_fmt(r.metric(m)) for m in METRIC_FIELDS])
            rows.append([name, "mean"] + [_fmt(cr.mean[m]) for m in METRIC_FIELDS])
            rows.append([name, "std"] + [_fmt(cr.std[m]) for m in METRIC_FIELDS])
            comparison_rows.append(
                [
                    str(k),
                    name,
                    _fmt(cr.mean["total_system_cost"]),
                    _fmt(cr.delta_system_cost),
                    _fmt(cr.mean["total_ev_perspective_cost"]),
                    _fmt(cr.delta_ev_perspective_cost),
                    _fmt(cr.baseline.breakdown.total_system_cost),
                ]
            )
        _write_csv(out / f"issue{k}.csv", header, rows)
    _write_csv(
        out / "comparison.csv",
        [
            "issue",
            "variant",
            "total_system_cost",
            "delta_system_cost_vs_evba",
            "total_ev_perspective_cost",
            "delta_ev_perspective_vs_evba",
            "evba_total_system_cost",
        ],
        comparison_rows,
    )
    print(f"wrote {', '.join(f'issue{k}.csv' for k in issues)} and comparison.csv in {out}")
    return EXIT_OK


def _series_from_csv(path: Path, scenario: Scenario) -> list[charts.EvSeries]:
    T = scenario.time_grid.horizon_steps
    data: dict[str, dict[str, np.ndarray]] = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            ev = row["entity_id"]
            slot = data.setdefault(
                ev, {k: np.zeros(T) for k in ("e_sch", "e_dch", "e_fch", "soe")}
            )
            t = int(row["t"])
            slot["e_sch"][t] = float(row["e_sch_kwh"])
            slot["e_dch"][t] = float(row["e_dch_kwh"])
            slot["e_fch"][t] = float(row["e_fch_kwh"])
            slot["soe"][t] = float(row["soe_kwh"])
    series = []
    for ev in scenario.evs:
        if ev.id not in data:
            continue
        d = data[ev.id]
        series.append(charts.EvSeries(ev.id, d["e_sch"] + d["e_fch"], d["e_dch"], d["soe"]))
    return series


def cmd_chart(args) -> int:
    run_dir = Path(getattr(args, "in"))
    schedule_path = run_dir / "schedule.csv"
    manifest_path = run_dir / "manifest.json"
    if not schedule_path.exists():
        raise _CliInputError(f"missing input file {schedule_path}")
    if not manifest_path.exists():
        raise _CliInputError(f"missing input file {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    scenario = _load(manifest["scenario"])
    series = _series_from_csv(schedule_path, scenario)

    if args.view == "ev":
        svg = charts.render_ev_view(series, scenario)
    elif args.view == "cs":
        svg = charts.render_cs_view(series, scenario)
    else:
        svg = charts.render_aggregate_view(series, scenario)
    out = run_dir / f"chart_{args.view}.svg"
    out.write_text(svg)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evsched", description="EV vs station-based day-ahead scheduling simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="optimize one model and write schedule/summary/manifest")
    p_run.add_argument("--scenario", required=True, help="scenario JSON path or 'builtin'")
    p_run.add_argument("--model", choices=("evba", "evca", "central"), required=True)
    p_run.add_argument("--boundary", choices=("naive", "oracle"), default="naive")
    p_run.add_argument("--obc-known", dest="obc_known", choices=("true", "false"), default="true")
    p_run.add_argument("--noise", choices=("on", "off"), default="off")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", required=True)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run the issue suite and write per-issue CSV reports")
    p_cmp.add_argument("--scenario", required=True)
    p_cmp.add_argument("--issues", default="1,2,3,4")
    p_cmp.add_argument("--seeds", type=int, default=100)
    p_cmp.add_argument("--seed", type=int, default=0)
    p_cmp.add_argument("--out", required=True)
    p_cmp.set_defaults(func=cmd_compare)

    p_chart = sub.add_parser("chart", help="render SVG profile charts from a run directory")
    p_chart.add_argument("--in", dest="in", required=True, help="run directory with schedule.csv")
    p_chart.add_argument("--view", choices=("ev", "cs", "aggregate"), default="ev")
    p_chart.set_defaults(func=cmd_chart)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _CliInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InfeasibleMobility, evca.InfeasibleSession) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
