"""Deterministic scenario sweeps over one design variable.

Each swept value yields one summary row holding the metric report plus the
analytic zone-bound quantities for that scenario. Rows keep the input order;
failures are recorded in place without aborting the sweep. Runs are
independent, so a worker pool may execute them concurrently; collation stays
ordered either way.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .bounds import ZoneBoundReport, zone_bound_report
from .metrics import MetricsReport
from .simulate import DemandProfile
from .scenario import (
    PRESETS,
    Scenario,
    ScenarioValidationError,
    evaluate_trace,
    scenario_from_dict,
    simulate_scenario,
)

SWEEP_VARIABLES = ("upstream_zone_length", "demand", "derating", "lc_residual_drop")

PARALLEL_ENV = "VSLSIM_PARALLEL"


@dataclass(frozen=True)
class SweepSpec:
    """A base scenario, the swept variable, and the values to evaluate."""

    base: Scenario
    variable: str
    values: tuple[float, ...]
    repetitions: int = 1

    def __post_init__(self) -> None:
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(
                f"unknown sweep variable {self.variable!r}; "
                f"expected one of {', '.join(SWEEP_VARIABLES)}"
            )
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if self.repetitions != 1:
            raise ValueError("runs are deterministic; repetitions must be 1")


def apply_sweep_value(base: Scenario, variable: str, value: float) -> Scenario:
    """Base scenario with one design variable replaced."""
    if variable == "upstream_zone_length":
        geometry = replace(base.geometry, upstream_zone_length=float(value))
        return replace(base, geometry=geometry, name=f"{base.name}_L0_{value:g}")
    if variable == "demand":
        return replace(
            base,
            demand=DemandProfile.constant(float(value)),
            name=f"{base.name}_d_{value:g}",
        )
    if variable == "derating":
        return replace(
            base,
            vsl=replace(base.vsl, derating=float(value)),
            name=f"{base.name}_alpha_{value:g}",
        )
    if variable == "lc_residual_drop":
        if base.lc is None:
            raise ScenarioValidationError(
                ["lane_change: sweep over residual_drop needs lane change config"]
            )
        return replace(
            base,
            lc=replace(base.lc, residual_drop=float(value)),
            name=f"{base.name}_epslc_{value:g}",
        )
    raise ValueError(f"unknown sweep variable {variable!r}")


@dataclass
class SweepRow:
    """Outcome of one swept value: metrics plus the analytic bound record."""

    variable: str
    value: float
    name: str
    status: str  # "ok" or "failed"
    error: str | None = None
    metrics: MetricsReport | None = None
    bound: ZoneBoundReport | None = None


def _run_one(args: tuple[Scenario, str, float]) -> SweepRow:
    base, variable, value = args
    name = f"{base.name}_{variable}_{value:g}"
    try:
        scenario = apply_sweep_value(base, variable, value).require_valid()
        bound = zone_bound_report(
            scenario.bound_inputs(), scenario.geometry.upstream_zone_length
        )
        trace = simulate_scenario(scenario)
        report = evaluate_trace(scenario, trace)
        return SweepRow(
            variable=variable,
            value=value,
            name=scenario.name,
            status="ok",
            metrics=report,
            bound=bound,
        )
    except Exception as exc:  # noqa: BLE001 - a failed run must not kill the sweep
        return SweepRow(
            variable=variable, value=value, name=name, status="failed", error=str(exc)
        )


def run_sweep(spec: SweepSpec, max_workers: int | None = None) -> list[SweepRow]:
    """Evaluate every swept value; row order always matches the value order."""
    if max_workers is None:
        max_workers = int(os.environ.get(PARALLEL_ENV, "1"))
    jobs = [(spec.base, spec.variable, v) for v in spec.values]
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(job) for job in jobs]


SWEEP_CSV_COLUMNS = (
    "variable",
    "value",
    "name",
    "status",
    "error",
    "att_min",
    "avg_stops",
    "avg_emission_g_per_km",
    "rrmse",
    "vehicles_counted",
    "zone_length_km",
    "l0_lower_bound_km",
    "time_to_clear_min",
    "arrival_time_min",
    "verdict",
    "feasible",
)


def sweep_rows_to_csv(rows: list[SweepRow], path: str | Path) -> None:
    """Deterministic CSV: same rows in, same bytes out."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(SWEEP_CSV_COLUMNS) + "\n")
        for row in rows:
            m = row.metrics
            b = row.bound
            cells = [
                row.variable,
                f"{row.value:.10g}",
                row.name,
                row.status,
                "" if row.error is None else row.error.replace(",", ";").replace("\n", " "),
                "" if m is None else f"{m.att_min:.10g}",
                "" if m is None else f"{m.avg_stops:.10g}",
                "" if m is None else f"{m.avg_emission_g_per_km:.10g}",
                "" if m is None else f"{m.rrmse:.10g}",
                "" if m is None else str(m.vehicles_counted),
                "" if b is None else f"{b.zone_length:.10g}",
                "" if b is None else f"{b.lower_bound:.10g}",
                "" if b is None else f"{b.time_to_clear * 60.0:.10g}",
                "" if b is None else f"{b.arrival_time * 60.0:.10g}",
                "" if b is None else b.verdict,
                "" if b is None else str(b.feasible).lower(),
            ]
            fh.write(",".join(cells) + "\n")


def load_sweep_spec(source: str | Path) -> SweepSpec:
    """Read a sweep spec JSON: a base scenario (inline or preset) plus the
    swept variable and its values."""
    path = Path(source)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioValidationError([f"file: cannot read {path}: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ScenarioValidationError(
            [f"file: {path} is not valid JSON: {exc}"]
        ) from exc
    if not isinstance(data, dict):
        raise ScenarioValidationError(["document: expected a JSON object"])
    if "preset" in data:
        preset = data["preset"]
        if preset not in PRESETS:
            raise ScenarioValidationError(
                [f"preset: unknown preset {preset!r}; see the presets command"]
            )
        base = PRESETS[preset]()
    elif "scenario" in data:
        base = scenario_from_dict(data["scenario"])
    else:
        raise ScenarioValidationError(
            ["document: sweep spec needs a 'preset' name or inline 'scenario'"]
        )
    try:
        return SweepSpec(
            base=base,
            variable=str(data.get("variable", "upstream_zone_length")),
            values=tuple(float(v) for v in data.get("values", ())),
            repetitions=int(data.get("repetitions", 1)),
        )
    except (ValueError, TypeError) as exc:
        raise ScenarioValidationError([f"sweep: {exc}"]) from exc
