"""Command line surface: run scenarios, sweep a design variable, print the
zone-bound table, calibrate a fundamental diagram, list presets.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime or
simulation error. The output directory defaults to the working directory and
can be overridden per call or through VSLSIM_OUTPUT_DIR.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .bounds import InfeasibleSpeedError, zone_bound_report
from .calibrate import CalibrationError, FdObservation, fit_fundamental_diagram
from .scenario import (
    PRESETS,
    ZONE_SWEEPS,
    Scenario,
    ScenarioValidationError,
    evaluate_trace,
    load_scenario,
    simulate_scenario,
)
from .simulate import CflViolationError, ControllerError
from .sweep import apply_sweep_value, load_sweep_spec, run_sweep, sweep_rows_to_csv

OUTPUT_DIR_ENV = "VSLSIM_OUTPUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage problems; remap to 1.
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="vslsim", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="simulate one scenario, write trace and metrics")
    p_run.add_argument("scenario", help="scenario JSON path or preset name")
    p_run.add_argument("--out", help="output directory")

    p_sweep = sub.add_parser("sweep", help="run a sweep spec, write the summary CSV")
    p_sweep.add_argument("spec", help="sweep spec JSON path")
    p_sweep.add_argument("--out", help="output directory")
    p_sweep.add_argument(
        "--traces", action="store_true", help="also write the per-run trace CSVs"
    )
    p_sweep.add_argument(
        "--workers", type=int, default=None, help="parallel runs (default 1)"
    )

    p_bound = sub.add_parser("bound", help="print the zone-length bound table")
    p_bound.add_argument("scenario", help="scenario JSON path or preset name")
    p_bound.add_argument("--v0", type=float, default=None, help="zone command km/h")
    p_bound.add_argument(
        "--zone-length", type=float, default=None, help="candidate zone length km"
    )
    p_bound.add_argument(
        "--densities",
        default=None,
        help="comma separated section densities veh/km at the incident instant",
    )
    p_bound.add_argument(
        "--upstream-density", type=float, default=None, help="entrance density veh/km"
    )

    p_cal = sub.add_parser("calibrate", help="fit a fundamental diagram from a CSV")
    p_cal.add_argument("observations", help="CSV with density,flow,incident columns")
    p_cal.add_argument("--out", help="parameter file to write")
    p_cal.add_argument(
        "--pin-free-flow-speed",
        type=float,
        default=None,
        help="use this free flow speed instead of the fitted slope",
    )

    sub.add_parser("presets", help="list bundled scenarios")
    return parser


def _out_dir(arg: str | None) -> Path:
    path = Path(arg or os.environ.get(OUTPUT_DIR_ENV, "."))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fmt(value: float, digits: int = 4) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    return f"{value:.{digits}g}"


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    trace = simulate_scenario(scenario)
    report = evaluate_trace(scenario, trace)
    out = _out_dir(args.out)
    stem = scenario.name
    trace_path = out / f"{stem}_trace.csv"
    trace.to_csv(
        trace_path, comment=f"scenario={scenario.name} hash={scenario.content_hash()}"
    )
    balance = trace.vehicle_balance()
    record = {
        "scenario": scenario.name,
        "scenario_hash": scenario.content_hash(),
        "metrics": report.to_dict(),
        "vehicle_balance": balance,
        "events": [[t, label] for t, label in trace.events],
    }
    record_path = out / f"{stem}_metrics.json"
    record_path.write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    print(f"trace:   {trace_path}")
    print(f"metrics: {record_path}")
    print(
        f"ATT {_fmt(report.att_min)} min | stops {_fmt(report.avg_stops)} | "
        f"CO2 {_fmt(report.avg_emission_g_per_km)} g/veh/km | "
        f"density error {_fmt(report.rrmse)} | vehicles {report.vehicles_counted}"
    )
    if report.vehicles_counted == 0:
        print("note: no probe vehicle completed a trip; ATT unavailable")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = load_sweep_spec(args.spec)
    rows = run_sweep(spec, max_workers=args.workers)
    out = _out_dir(args.out)
    summary = out / f"{spec.base.name}_{spec.variable}_sweep.csv"
    sweep_rows_to_csv(rows, summary)
    if args.traces:
        for value in spec.values:
            scenario = apply_sweep_value(spec.base, spec.variable, value)
            if scenario.validate():
                continue
            trace = simulate_scenario(scenario)
            trace.to_csv(
                out / f"{scenario.name}_trace.csv",
                comment=f"scenario={scenario.name} hash={scenario.content_hash()}",
            )
    failed = sum(1 for r in rows if r.status != "ok")
    print(f"summary: {summary} ({len(rows)} rows, {failed} failed)")
    return EXIT_OK


def _cmd_bound(args) -> int:
    scenario = load_scenario(args.scenario)
    densities = None
    if args.densities is not None:
        densities = np.array([float(x) for x in args.densities.split(",")])
    inputs = scenario.bound_inputs(
        zone_limit=args.v0,
        upstream_density=args.upstream_density,
        densities=densities,
    )
    zone_length = (
        scenario.geometry.upstream_zone_length
        if args.zone_length is None
        else args.zone_length
    )
    report = zone_bound_report(inputs, zone_length)
    rows = [
        ("zone command v0 (km/h)", _fmt(inputs.zone_limit)),
        ("lower bound on zone length (km)", _fmt(report.lower_bound)),
        ("time to clear congestion (min)", _fmt(report.time_to_clear * 60.0)),
        ("first held vehicle arrival (min)", _fmt(report.arrival_time * 60.0)),
        ("verdict at zone length %s km" % _fmt(report.zone_length), report.verdict),
        ("command feasible", str(report.feasible).lower()),
    ]
    width = max(len(label) for label, _ in rows)
    for label, value in rows:
        print(f"{label:<{width}}  {value}")
    print(
        json.dumps(
            {
                "zone_limit": inputs.zone_limit,
                "zone_length": report.zone_length,
                "lower_bound_km": report.lower_bound,
                "lower_bound_raw_km": report.lower_bound_raw,
                "vacuous": report.vacuous,
                "time_to_clear_h": report.time_to_clear,
                "arrival_time_h": report.arrival_time,
                "verdict": report.verdict,
                "feasible": report.feasible,
            }
        )
    )
    return EXIT_OK


def _read_observations(path: str) -> list[FdObservation]:
    obs: list[FdObservation] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().lower().split(",")
        try:
            i_rho = header.index("density")
            i_q = header.index("flow")
            i_inc = header.index("incident")
        except ValueError as exc:
            raise CalibrationError(
                "observation CSV needs density,flow,incident columns"
            ) from exc
        for line in fh:
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            obs.append(
                FdObservation(
                    density=float(cells[i_rho]),
                    flow=float(cells[i_q]),
                    incident=cells[i_inc].strip() in ("1", "true", "True"),
                )
            )
    return obs


def _cmd_calibrate(args) -> int:
    obs = _read_observations(args.observations)
    fd, diag = fit_fundamental_diagram(
        obs, pinned_free_flow_speed=args.pin_free_flow_speed
    )
    params = {
        "fundamental_diagram": {
            "capacity": fd.capacity,
            "downstream_capacity": fd.downstream_capacity,
            "free_flow_speed": fd.free_flow_speed,
            "backprop_speed": fd.backprop_speed,
            "outflow_backprop_speed": fd.outflow_backprop_speed,
            "jam_density": fd.jam_density,
            "outflow_jam_density": fd.outflow_jam_density,
            "capacity_drop_factor": fd.capacity_drop_factor,
        }
    }
    text = json.dumps(params, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"parameters: {args.out}")
    else:
        print(text, end="")
    print(
        f"fitted v_f {diag.fitted_free_flow_speed:.4g} km/h"
        + (
            f" (pinned to {diag.pinned_free_flow_speed:.4g})"
            if diag.pinned_free_flow_speed is not None
            else ""
        )
    )
    print(
        f"branches: {diag.n_free} free / {diag.n_congested} congested, "
        f"incident {diag.n_incident_free} free / {diag.n_incident_congested} congested"
    )
    if diag.outflow_wave_fallback:
        print("outflow wave speed fell back to w / 2")
    for note in diag.notes:
        print(f"note: {note}")
    return EXIT_OK


def _cmd_presets(args) -> int:
    for name, factory in PRESETS.items():
        s = factory()
        sweep = ", ".join(f"{v:g}" for v in ZONE_SWEEPS[name])
        print(
            f"{name}: demand {s.demand.at(0.0):g} veh/h, zone {s.geometry.upstream_zone_length:g} km, "
            f"{s.geometry.num_sections} sections x {s.geometry.section_length:g} km"
        )
        print(f"  zone-length study values (km): {sweep}")
    return EXIT_OK


def cli_dispatch(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        handler = {
            "run": _cmd_run,
            "sweep": _cmd_sweep,
            "bound": _cmd_bound,
            "calibrate": _cmd_calibrate,
            "presets": _cmd_presets,
        }[args.command]
        return handler(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (
        ScenarioValidationError,
        CalibrationError,
        InfeasibleSpeedError,
        CflViolationError,
    ) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ControllerError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
