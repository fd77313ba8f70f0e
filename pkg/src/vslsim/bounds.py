"""Analytical sizing of the upstream speed-limited zone.

When the zone command slows entering traffic, a low-density gap opens between
the vehicles already on the mainline and the newly metered platoon. The queue
at the bottleneck is absorbed without fresh shockwaves exactly when it clears
before the first metered vehicle arrives, which translates into a lower bound
on the zone length. These are closed-form expressions over measured densities
at the moment the incident starts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctm import FundamentalDiagram, NetworkGeometry


class InfeasibleSpeedError(ValueError):
    """Zone command too fast for the measured entrance occupancy.

    Raised when ``zone_limit * upstream_density`` is at least the congested
    bottleneck discharge: the metered inflow then matches or outruns the queue
    discharge and no finite zone length can absorb the congestion.
    """


@dataclass(frozen=True)
class BoundInputs:
    """Snapshot needed by the zone-length bound: parameters, command, densities."""

    fd: FundamentalDiagram
    num_sections: int
    section_length: float  # km
    zone_limit: float  # v0, km/h
    upstream_density: float  # veh/km at the incident instant
    densities: np.ndarray  # veh/km per section at the incident instant

    def __post_init__(self) -> None:
        if self.num_sections < 1:
            raise ValueError("num_sections must be at least 1")
        if self.section_length <= 0.0:
            raise ValueError("section_length must be strictly positive")
        if not 0.0 < self.zone_limit <= self.fd.free_flow_speed:
            raise ValueError("zone_limit must lie in (0, free_flow_speed]")
        arr = np.array(self.densities, dtype=float, copy=True).reshape(-1)
        if arr.shape[0] != self.num_sections:
            raise ValueError(
                f"expected {self.num_sections} section densities, got {arr.shape[0]}"
            )
        hi = self.fd.outflow_jam_density
        if np.any(arr < 0.0) or np.any(arr > hi):
            raise ValueError(f"section densities must lie in [0, {hi:.6g}]")
        if not 0.0 <= self.upstream_density <= hi:
            raise ValueError(f"upstream_density must lie in [0, {hi:.6g}]")
        arr.flags.writeable = False
        object.__setattr__(self, "densities", arr)

    @classmethod
    def free_flow(
        cls,
        fd: FundamentalDiagram,
        geometry: NetworkGeometry,
        zone_limit: float,
        demand: float,
    ) -> "BoundInputs":
        """Inputs for a corridor in free flow at the given demand.

        Every density, the entrance included, sits at ``demand / v_f`` (capped
        at the critical density when demand exceeds capacity).
        """
        rho = min(demand, fd.capacity) / fd.free_flow_speed
        return cls(
            fd=fd,
            num_sections=geometry.num_sections,
            section_length=geometry.section_length,
            zone_limit=zone_limit,
            upstream_density=rho,
            densities=np.full(geometry.num_sections, rho),
        )

    @property
    def discharge_rate(self) -> float:
        """Congested bottleneck discharge (veh/h)."""
        return self.fd.dropped_capacity


def v0_feasible(inputs: BoundInputs) -> bool:
    """True when the zone command meters less than the congested discharge.

    The strict condition ``zone_limit < dropped_capacity / upstream_density``;
    vacuously true at zero entrance density.
    """
    if inputs.upstream_density == 0.0:
        return True
    return inputs.zone_limit < inputs.discharge_rate / inputs.upstream_density


def l0_lower_bound_raw(inputs: BoundInputs) -> float:
    """Signed zone-length bound (km); negative means any zone length works."""
    if not v0_feasible(inputs):
        raise InfeasibleSpeedError(
            f"zone command {inputs.zone_limit:.6g} km/h meters "
            f"{inputs.zone_limit * inputs.upstream_density:.6g} veh/h into the "
            f"corridor, not below the congested discharge "
            f"{inputs.discharge_rate:.6g} veh/h; no finite zone length works"
        )
    fd = inputs.fd
    v_f = fd.free_flow_speed
    rate = inputs.discharge_rate
    stored_flow = v_f * float(np.sum(inputs.densities)) - rate * inputs.num_sections
    numerator = stored_flow * inputs.zone_limit * inputs.section_length
    denominator = (rate - inputs.zone_limit * inputs.upstream_density) * v_f
    return numerator / denominator


def l0_lower_bound(inputs: BoundInputs) -> float:
    """Minimum upstream zone length that absorbs the bottleneck queue (km).

    Negative raw values are clamped to zero: the mainline then holds fewer
    vehicles than the bottleneck discharges before the first metered vehicle
    can arrive, so no zone is needed. Use :func:`l0_lower_bound_raw` for the
    signed value.
    """
    return max(0.0, l0_lower_bound_raw(inputs))


def time_to_clear(inputs: BoundInputs, zone_length: float) -> float:
    """Time for the bottleneck to discharge every vehicle stored at the
    incident instant (h), assuming congested discharge throughout."""
    if zone_length < 0.0:
        raise ValueError("zone_length must be non-negative")
    stored = zone_length * inputs.upstream_density + inputs.section_length * float(
        np.sum(inputs.densities)
    )
    return stored / inputs.discharge_rate


def arrival_time(
    zone_length: float,
    zone_limit: float,
    num_sections: int,
    section_length: float,
    free_flow_speed: float,
) -> float:
    """Transit time of the first metered vehicle to the bottleneck (h):
    the zone at the zone command, the mainline at free flow speed."""
    if zone_limit <= 0.0:
        raise ValueError("zone_limit must be strictly positive")
    return zone_length / zone_limit + num_sections * section_length / free_flow_speed


@dataclass(frozen=True)
class ChasingVerdict:
    """Outcome of the queue-versus-platoon race for a candidate zone length."""

    absorbed: bool
    time_to_clear: float  # h
    arrival_time: float  # h

    @property
    def label(self) -> str:
        return "absorbed" if self.absorbed else "shockwave_risk"


def chasing_verdict(inputs: BoundInputs, zone_length: float) -> ChasingVerdict:
    """Absorbed exactly when the queue clears strictly before the first
    metered vehicle reaches the bottleneck."""
    t_b = time_to_clear(inputs, zone_length)
    t_y = arrival_time(
        zone_length,
        inputs.zone_limit,
        inputs.num_sections,
        inputs.section_length,
        inputs.fd.free_flow_speed,
    )
    return ChasingVerdict(absorbed=t_b < t_y, time_to_clear=t_b, arrival_time=t_y)


@dataclass(frozen=True)
class ZoneBoundReport:
    """Everything the bound computation knows about one candidate zone length."""

    zone_length: float  # km, the evaluated candidate
    lower_bound: float  # km, clamped at zero
    lower_bound_raw: float  # km, signed
    vacuous: bool  # True when the raw bound is negative
    feasible: bool
    time_to_clear: float  # h
    arrival_time: float  # h
    absorbed: bool

    @property
    def verdict(self) -> str:
        return "absorbed" if self.absorbed else "shockwave_risk"


def zone_bound_report(inputs: BoundInputs, zone_length: float) -> ZoneBoundReport:
    """Bundle bound, clearing time, arrival time, and verdict for reporting."""
    raw = l0_lower_bound_raw(inputs)
    verdict = chasing_verdict(inputs, zone_length)
    return ZoneBoundReport(
        zone_length=zone_length,
        lower_bound=max(0.0, raw),
        lower_bound_raw=raw,
        vacuous=raw < 0.0,
        feasible=v0_feasible(inputs),
        time_to_clear=verdict.time_to_clear,
        arrival_time=verdict.arrival_time,
        absorbed=verdict.absorbed,
    )
