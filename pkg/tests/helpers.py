"""Shared generators for randomized and round-trip tests."""

from __future__ import annotations

import numpy as np

from vslsim import BoundInputs, FdObservation, FundamentalDiagram


def random_triangle(rng: np.random.Generator) -> FundamentalDiagram:
    """Random but always triangle-consistent fundamental diagram."""
    v_f = rng.uniform(60.0, 130.0)
    w = rng.uniform(10.0, 45.0)
    w_out = rng.uniform(0.3, 1.0) * w
    capacity = rng.uniform(3000.0, 9000.0)
    return FundamentalDiagram.from_triangle(
        capacity=capacity,
        downstream_capacity=rng.uniform(0.5, 1.0) * capacity,
        free_flow_speed=v_f,
        backprop_speed=w,
        outflow_backprop_speed=w_out,
        capacity_drop_factor=rng.uniform(0.02, 0.4),
    )


def random_feasible_bound_inputs(rng: np.random.Generator) -> BoundInputs:
    """Bound inputs with a zone command strictly slower than the congested
    discharge allows for the drawn entrance occupancy."""
    while True:
        fd = random_triangle(rng)
        n = int(rng.integers(1, 11))
        section_length = rng.uniform(0.3, 3.0)
        densities = rng.uniform(0.0, fd.jam_density, size=n)
        rho0 = rng.uniform(0.0, fd.jam_density)
        v0 = rng.uniform(1.0, fd.free_flow_speed)
        limit = np.inf if rho0 == 0.0 else fd.dropped_capacity / rho0
        if v0 < limit * 0.999:
            return BoundInputs(
                fd=fd,
                num_sections=n,
                section_length=section_length,
                zone_limit=v0,
                upstream_density=rho0,
                densities=densities,
            )


def sample_fd_observations(
    fd: FundamentalDiagram,
    rng: np.random.Generator,
    noise: float = 0.0,
    noise_kind: str = "uniform",
    n_free: int = 330,
    n_capacity: int = 20,
    n_congested: int = 250,
    n_incident_free: int = 150,
    n_recovered: int = 15,
    n_dropped: int = 160,
    n_outflow: int = 75,
) -> list[FdObservation]:
    """Synthetic detector observations drawn from a known diagram.

    The mix mimics a demand ramp-up study: spread over both branches, a
    cluster pinned at capacity operation, and (for the lane-closure set)
    clusters at the recovered and dropped discharge levels plus deep
    congestion on the outflow-limited branch.
    """
    rho_c = fd.critical_density
    thr = fd.downstream_capacity / fd.free_flow_speed
    dropped = fd.dropped_capacity
    # Deepest density at which the dropped discharge is still sustainable.
    plateau_hi = fd.outflow_jam_density - dropped / fd.outflow_backprop_speed

    pairs: list[tuple[float, float, bool]] = []
    for rho in rng.uniform(0.5, 0.98 * rho_c, size=n_free):
        pairs.append((rho, fd.free_flow_speed * rho, False))
    pairs += [(rho_c, fd.capacity, False)] * n_capacity
    for rho in rng.uniform(1.02 * rho_c, 0.98 * fd.jam_density, size=n_congested):
        pairs.append((rho, fd.backprop_speed * (fd.jam_density - rho), False))
    for rho in rng.uniform(0.5, 0.95 * thr, size=n_incident_free):
        pairs.append((rho, fd.free_flow_speed * rho, True))
    pairs += [(thr, fd.downstream_capacity, True)] * n_recovered
    for rho in rng.uniform(1.05 * thr, 0.97 * plateau_hi, size=n_dropped):
        pairs.append((rho, dropped, True))
    for rho in rng.uniform(
        plateau_hi * 1.05, 0.97 * fd.outflow_jam_density, size=n_outflow
    ):
        pairs.append(
            (rho, fd.outflow_backprop_speed * (fd.outflow_jam_density - rho), True)
        )

    out = []
    for rho, q, incident in pairs:
        if noise > 0.0:
            if noise_kind == "uniform":
                q *= 1.0 + noise * rng.uniform(-1.0, 1.0)
            else:
                q *= 1.0 + rng.normal(0.0, noise)
        out.append(FdObservation(density=rho, flow=max(q, 0.0), incident=incident))
    return out
