"""Scenario definition, JSON schema, validation, and the bundled presets.

Scenario files are plain JSON with fixed units: lengths in km (the lane
change advisory distance in m), speeds in km/h, flows in veh/h, densities in
veh/km, schedule times and the horizon in minutes, the integration step and
the control period in seconds. Internally every time is in hours.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

from . import control
from .bounds import BoundInputs
from .control import LcConfig, VslRuleConfig
from .ctm import FundamentalDiagram, NetworkGeometry, equilibrium_density
from .metrics import (
    MetricsReport,
    compute_metrics,
    default_emission_rate,
    emission_rate_from_table,
)
from .simulate import (
    DemandProfile,
    IncidentSchedule,
    SimulationTrace,
    cfl_limit,
    run,
)

CONTROLLER_KINDS = ("no_control", "rule_based", "rule_based_reactive")


class ScenarioValidationError(ValueError):
    """One or more scenario invariants failed; carries every violation."""

    def __init__(self, violations: list[str]) -> None:
        self.violations = violations
        super().__init__(
            "invalid scenario:\n" + "\n".join(f"  - {v}" for v in violations)
        )


@dataclass(frozen=True)
class MetricConfig:
    """Metric evaluation settings carried by the scenario."""

    stop_speed: float = 5.0  # km/h
    resume_speed: float = 10.0  # km/h
    seed_interval: float = 10.0  # s between probe vehicles
    density_floor: float = 1.0  # veh/km treated as an empty cell
    emission_table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.stop_speed < self.resume_speed:
            raise ValueError("stop_speed must satisfy 0 <= stop_speed < resume_speed")
        if self.seed_interval <= 0.0:
            raise ValueError("seed_interval must be strictly positive")
        if self.density_floor < 0.0:
            raise ValueError("density_floor must be non-negative")

    def rate_fn(self) -> Callable[[float], float]:
        if self.emission_table is None:
            return default_emission_rate
        return emission_rate_from_table(self.emission_table)


@dataclass(frozen=True)
class Scenario:
    """Everything one simulation run needs, with validated invariants."""

    name: str
    fd: FundamentalDiagram
    geometry: NetworkGeometry
    demand: DemandProfile
    incident: IncidentSchedule | None
    controller: str = "rule_based"
    vsl: VslRuleConfig = VslRuleConfig()
    lc: LcConfig | None = None
    horizon: float = 1.5  # h
    dt: float = 1.0  # s
    control_period: float = 30.0  # s
    metrics: MetricConfig = MetricConfig()
    repetitions: int = 1
    seed: int = 0

    @property
    def dt_hours(self) -> float:
        return self.dt / 3600.0

    @property
    def control_period_hours(self) -> float:
        return self.control_period / 3600.0

    def validate(self) -> list[str]:
        """Collect every violated invariant (empty list means valid)."""
        problems: list[str] = []
        if self.controller not in CONTROLLER_KINDS:
            problems.append(
                f"controller: unknown kind {self.controller!r}, expected one of "
                f"{', '.join(CONTROLLER_KINDS)}"
            )
        if self.controller != "no_control" and self.incident is None:
            problems.append("controller: rule-based control needs an incident schedule")
        if self.horizon < 0.0:
            problems.append("horizon: must be non-negative")
        if self.dt <= 0.0:
            problems.append("dt: must be strictly positive")
        else:
            limit = cfl_limit(self.geometry, self.fd) * 3600.0
            if self.dt > limit:
                problems.append(
                    f"dt: {self.dt:.6g} s violates the CFL bound {limit:.6g} s "
                    "for this geometry and fundamental diagram"
                )
        if self.control_period <= 0.0:
            problems.append("control_period: must be strictly positive")
        if self.incident is not None and self.horizon <= self.incident.end:
            problems.append(
                f"horizon: {self.horizon:.6g} h must exceed the incident end "
                f"{self.incident.end:.6g} h"
            )
        if self.lc is not None and self.lc.residual_drop > self.fd.capacity_drop_factor:
            problems.append(
                "lane_change.residual_drop: must not exceed the capacity drop factor"
            )
        if self.repetitions != 1:
            problems.append(
                "repetitions: runs are deterministic, repetitions must be 1"
            )
        return problems

    def require_valid(self) -> "Scenario":
        problems = self.validate()
        if problems:
            raise ScenarioValidationError(problems)
        return self

    # Analytic companions -------------------------------------------------

    def phase1_zone_limit(self) -> float:
        """Derated zone command active right after the incident starts (km/h)."""
        congested, _ = control.rule_commands(self.fd)
        return control.derated_command(congested, self.vsl, self.fd)

    def switch_time(self) -> float | None:
        """Scheduled step-up instant of the zone command (h), None without
        an incident."""
        if self.incident is None:
            return None
        return control.switch_time(
            self.incident,
            self.vsl,
            self.fd,
            self.geometry,
            self.demand.at(self.incident.start),
        )

    def rho_star(self) -> float:
        """Target equilibrium density for the tracking error (veh/km)."""
        if self.incident is not None:
            return equilibrium_density(self.demand.at(self.incident.start), self.fd)
        return min(self.demand.at(0.0), self.fd.capacity) / self.fd.free_flow_speed

    def metrics_window(self) -> tuple[float, float]:
        """Tracking-error window: command step-up to incident end, or the
        whole horizon without an incident."""
        if self.incident is None:
            return (0.0, self.horizon)
        return (self.switch_time(), self.incident.end)

    def bound_inputs(
        self,
        zone_limit: float | None = None,
        upstream_density: float | None = None,
        densities=None,
    ) -> BoundInputs:
        """Inputs for the zone-length bound; defaults assume free flow at the
        demand level of the incident instant and the phase-1 zone command."""
        t0 = self.incident.start if self.incident is not None else 0.0
        v0 = self.phase1_zone_limit() if zone_limit is None else zone_limit
        base = BoundInputs.free_flow(self.fd, self.geometry, v0, self.demand.at(t0))
        if upstream_density is None and densities is None:
            return base
        return BoundInputs(
            fd=self.fd,
            num_sections=self.geometry.num_sections,
            section_length=self.geometry.section_length,
            zone_limit=v0,
            upstream_density=(
                base.upstream_density if upstream_density is None else upstream_density
            ),
            densities=base.densities if densities is None else densities,
        )

    # Serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        fd = self.fd
        g = self.geometry
        out: dict = {
            "name": self.name,
            "fundamental_diagram": {
                "capacity": fd.capacity,
                "downstream_capacity": fd.downstream_capacity,
                "free_flow_speed": fd.free_flow_speed,
                "backprop_speed": fd.backprop_speed,
                "outflow_backprop_speed": fd.outflow_backprop_speed,
                "jam_density": fd.jam_density,
                "outflow_jam_density": fd.outflow_jam_density,
                "capacity_drop_factor": fd.capacity_drop_factor,
            },
            "geometry": {
                "num_sections": g.num_sections,
                "section_length_km": g.section_length,
                "upstream_zone_length_km": g.upstream_zone_length,
                "lanes_total": g.lanes_total,
                "lanes_closed": g.lanes_closed,
            },
            "demand": {
                "times_min": [t * 60.0 for t in self.demand.times],
                "flows": list(self.demand.flows),
            },
            "incident": None
            if self.incident is None
            else {
                "start_min": self.incident.start * 60.0,
                "end_min": self.incident.end * 60.0,
                "lanes_closed": self.incident.lanes_closed,
            },
            "controller": self.controller,
            "vsl": {
                "derating": self.vsl.derating,
                "switch_margin_min": self.vsl.switch_margin * 60.0,
                "quantize_step": self.vsl.quantize_step,
            },
            "lane_change": None
            if self.lc is None
            else {
                "advisory_distance_per_lane_m": self.lc.advisory_distance_per_lane,
                "residual_drop": self.lc.residual_drop,
            },
            "horizon_min": self.horizon * 60.0,
            "dt_s": self.dt,
            "control_period_s": self.control_period,
            "metrics": {
                "stop_speed": self.metrics.stop_speed,
                "resume_speed": self.metrics.resume_speed,
                "seed_interval_s": self.metrics.seed_interval,
                "density_floor": self.metrics.density_floor,
                "emission_table": None
                if self.metrics.emission_table is None
                else [list(p) for p in self.metrics.emission_table],
            },
            "repetitions": self.repetitions,
            "seed": self.seed,
        }
        return out

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]


def _build_component(problems: list[str], path: str, builder: Callable):
    try:
        return builder()
    except (ValueError, TypeError, KeyError, AttributeError) as exc:
        problems.append(f"{path}: {exc}")
        return None


def scenario_from_dict(data: dict) -> Scenario:
    """Build and fully validate a scenario, reporting every violation."""
    if not isinstance(data, dict):
        raise ScenarioValidationError(["document: expected a JSON object"])
    problems: list[str] = []

    def section(key: str, required: bool = True) -> dict | None:
        value = data.get(key)
        if value is None:
            if required:
                problems.append(f"{key}: missing")
            return None
        if not isinstance(value, dict):
            problems.append(f"{key}: expected an object")
            return None
        return value

    fd_data = section("fundamental_diagram")
    fd = (
        _build_component(
            problems,
            "fundamental_diagram",
            lambda: FundamentalDiagram(
                capacity=float(fd_data["capacity"]),
                downstream_capacity=float(fd_data["downstream_capacity"]),
                free_flow_speed=float(fd_data["free_flow_speed"]),
                backprop_speed=float(fd_data["backprop_speed"]),
                outflow_backprop_speed=float(fd_data["outflow_backprop_speed"]),
                jam_density=float(fd_data["jam_density"]),
                outflow_jam_density=float(fd_data["outflow_jam_density"]),
                capacity_drop_factor=float(fd_data["capacity_drop_factor"]),
            ),
        )
        if fd_data is not None
        else None
    )

    g_data = section("geometry")
    geometry = (
        _build_component(
            problems,
            "geometry",
            lambda: NetworkGeometry(
                num_sections=int(g_data["num_sections"]),
                section_length=float(g_data["section_length_km"]),
                upstream_zone_length=float(g_data.get("upstream_zone_length_km", 0.0)),
                lanes_total=int(g_data.get("lanes_total", 3)),
                lanes_closed=int(g_data.get("lanes_closed", 1)),
            ),
        )
        if g_data is not None
        else None
    )

    d_data = section("demand")
    demand = (
        _build_component(
            problems,
            "demand",
            lambda: DemandProfile(
                times=tuple(float(t) / 60.0 for t in d_data["times_min"]),
                flows=tuple(float(f) for f in d_data["flows"]),
            ),
        )
        if d_data is not None
        else None
    )

    incident = None
    i_data = section("incident", required=False)
    if i_data is not None:
        incident = _build_component(
            problems,
            "incident",
            lambda: IncidentSchedule(
                start=float(i_data["start_min"]) / 60.0,
                end=float(i_data["end_min"]) / 60.0,
                lanes_closed=int(i_data.get("lanes_closed", 1)),
            ),
        )

    v_data = data.get("vsl") or {}
    vsl = _build_component(
        problems,
        "vsl",
        lambda: VslRuleConfig(
            derating=float(v_data.get("derating", 0.785)),
            switch_margin=float(v_data.get("switch_margin_min", 6.0)) / 60.0,
            quantize_step=float(v_data.get("quantize_step", 0.0)),
        ),
    )

    lc = None
    lc_data = section("lane_change", required=False)
    if lc_data is not None:
        lc = _build_component(
            problems,
            "lane_change",
            lambda: LcConfig(
                advisory_distance_per_lane=float(
                    lc_data.get("advisory_distance_per_lane_m", 800.0)
                ),
                residual_drop=float(lc_data.get("residual_drop", 0.0)),
            ),
        )

    m_data = data.get("metrics") or {}
    table = m_data.get("emission_table")
    metrics = _build_component(
        problems,
        "metrics",
        lambda: MetricConfig(
            stop_speed=float(m_data.get("stop_speed", 5.0)),
            resume_speed=float(m_data.get("resume_speed", 10.0)),
            seed_interval=float(m_data.get("seed_interval_s", 10.0)),
            density_floor=float(m_data.get("density_floor", 1.0)),
            emission_table=None
            if table is None
            else tuple((float(v), float(r)) for v, r in table),
        ),
    )

    if problems or fd is None or geometry is None or demand is None:
        raise ScenarioValidationError(problems or ["document: incomplete scenario"])

    scenario = Scenario(
        name=str(data.get("name", "scenario")),
        fd=fd,
        geometry=geometry,
        demand=demand,
        incident=incident,
        controller=str(data.get("controller", "rule_based")),
        vsl=vsl,
        lc=lc,
        horizon=float(data.get("horizon_min", 90.0)) / 60.0,
        dt=float(data.get("dt_s", 1.0)),
        control_period=float(data.get("control_period_s", 30.0)),
        metrics=metrics,
        repetitions=int(data.get("repetitions", 1)),
        seed=int(data.get("seed", 0)),
    )
    return scenario.require_valid()


def load_scenario(source: str | Path) -> Scenario:
    """Load a scenario from a preset name or a JSON file path."""
    name = str(source)
    if name in PRESETS:
        return PRESETS[name]()
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioValidationError([f"file: cannot read {path}: {exc}"]) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioValidationError([f"file: {path} is not valid JSON: {exc}"]) from exc
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def make_controller(scenario: Scenario) -> control.Controller:
    """Instantiate the controller selected by the scenario."""
    kind = scenario.controller
    if kind == "no_control":
        return control.NoControl(scenario.fd, scenario.geometry)
    if scenario.incident is None:
        raise ScenarioValidationError(
            ["controller: rule-based control needs an incident schedule"]
        )
    if kind == "rule_based":
        return control.RuleBasedSchedule(
            scenario.fd,
            scenario.geometry,
            scenario.incident,
            scenario.vsl,
            scenario.demand.at(scenario.incident.start),
        )
    if kind == "rule_based_reactive":
        return control.RuleBasedReactive(
            scenario.fd,
            scenario.geometry,
            scenario.incident,
            scenario.vsl,
            scenario.demand.at,
        )
    raise ScenarioValidationError([f"controller: unknown kind {kind!r}"])


def simulate_scenario(scenario: Scenario, controller=None) -> SimulationTrace:
    """Validate, build the configured controller when none is given, and run."""
    scenario.require_valid()
    if controller is None:
        controller = make_controller(scenario)
    return run(scenario, controller)


def evaluate_trace(scenario: Scenario, trace: SimulationTrace) -> MetricsReport:
    """Compute the full metrics report with the scenario's settings."""
    window = scenario.metrics_window()
    return compute_metrics(
        trace,
        seed_interval=scenario.metrics.seed_interval / 3600.0,
        rho_star=scenario.rho_star(),
        window=window,
        v_stop=scenario.metrics.stop_speed,
        v_resume=scenario.metrics.resume_speed,
        rate_fn=scenario.metrics.rate_fn(),
        rho_min=scenario.metrics.density_floor,
    )


# Bundled presets ----------------------------------------------------------

# Zone lengths (km) evaluated in the bundled studies for each demand level.
HIGH_DEMAND_ZONE_SWEEP = (0.0, 0.8, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 3.2, 4.0, 4.8)
MODERATE_DEMAND_ZONE_SWEEP = (0.0, 0.4, 0.6, 0.8, 1.0, 1.2, 1.6, 3.2, 4.8)

_REFERENCE_FD = dict(
    capacity=7200.0,
    downstream_capacity=4800.0,
    free_flow_speed=100.0,
    backprop_speed=30.0,
    outflow_backprop_speed=15.0,
    jam_density=312.0,
    outflow_jam_density=552.0,
    capacity_drop_factor=0.1,
)


def _preset(
    name: str,
    demand: float,
    zone_length: float,
    advisory_m: float,
    switch_margin_min: float,
) -> Scenario:
    return Scenario(
        name=name,
        fd=FundamentalDiagram(**_REFERENCE_FD),
        geometry=NetworkGeometry(
            num_sections=6,
            section_length=1.6,
            upstream_zone_length=zone_length,
            lanes_total=3,
            lanes_closed=1,
        ),
        demand=DemandProfile.constant(demand),
        incident=IncidentSchedule(start=10.0 / 60.0, end=80.0 / 60.0, lanes_closed=1),
        controller="rule_based",
        # derating 0.8 with a 5 km/h sign grid posts 20 km/h before and
        # 25 km/h after the scheduled switch.
        vsl=VslRuleConfig(
            derating=0.8,
            switch_margin=switch_margin_min / 60.0,
            quantize_step=5.0,
        ),
        lc=LcConfig(advisory_distance_per_lane=advisory_m, residual_drop=0.0),
        horizon=1.5,
        dt=1.0,
        control_period=30.0,
        metrics=MetricConfig(),
    )


def high_demand_preset() -> Scenario:
    """Six 1.6 km sections, 7000 veh/h demand, 4.8 km metering zone; the
    scheduled command steps up 20 minutes after the incident starts."""
    return _preset("high_demand", 7000.0, 4.8, 800.0, 6.0)


def moderate_demand_preset() -> Scenario:
    """Same corridor at 5500 veh/h with a 1.6 km metering zone."""
    # Margin chosen so the scheduled switch lands 20 min after the incident.
    return _preset("moderate_demand", 5500.0, 1.6, 700.0, 20.0 - 8.555555555555555)


PRESETS: dict[str, Callable[[], Scenario]] = {
    "high_demand": high_demand_preset,
    "moderate_demand": moderate_demand_preset,
}

ZONE_SWEEPS: dict[str, tuple[float, ...]] = {
    "high_demand": HIGH_DEMAND_ZONE_SWEEP,
    "moderate_demand": MODERATE_DEMAND_ZONE_SWEEP,
}
