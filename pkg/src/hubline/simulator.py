"""Deterministic aggregate loading simulation and the two objectives.

`propagate_timetable` turns a plan (optionally with holding adjustments)
into a departure matrix; `simulate_loading` replays boarding/alighting
against a demand model; the objective functions reduce the resulting
flow to total slack capacity and total passenger waiting time.
"""

import csv
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .core import (
    FlowResult,
    HoldingPlan,
    InternalInvariantError,
    LineConfig,
    OperationBounds,
    TrainPlan,
    propagate_departures,
)
from .demand import DemandModel

NEGATIVE_TOLERANCE = 1e-9


def propagate_timetable(
    plan: TrainPlan,
    cfg: LineConfig,
    holding: Optional[HoldingPlan] = None,
    bounds: Optional[OperationBounds] = None,
) -> np.ndarray:
    """Departure matrix (train, station) for a plan; the last column is the
    terminal arrival time. Holding adds its signed adjustment to each
    intermediate dwell. If bounds are given, holding magnitudes are
    checked against the holding cap."""
    holds = None
    if holding is not None:
        holds = holding.holds
        if holds.shape != plan.dwell_times.shape:
            raise ValueError(
                f"holding shape {holds.shape} does not match dwell matrix {plan.dwell_times.shape}"
            )
        if bounds is not None and np.any(np.abs(holds) > bounds.hold_max + 1e-9):
            raise ValueError(f"holding adjustment exceeds the {bounds.hold_max}-minute cap")
    return propagate_departures(plan.first_departures, plan.dwell_times, cfg.run_times, holds)


def simulate_loading(
    departures: np.ndarray,
    formations: Sequence[int],
    cfg: LineConfig,
    dm: DemandModel,
) -> FlowResult:
    """Run the loading recursion over all trains and stations.

    Trains are processed in index order; at each station a train first
    discharges passengers destined there, then boards waiting passengers
    (fresh arrivals since the previous train plus earlier left-behinds)
    up to its residual capacity, split proportionally across
    destinations.
    """
    dep = np.ascontiguousarray(departures, dtype=float)
    if dep.ndim != 2 or dep.shape[1] != cfg.n_stations:
        raise ValueError(f"departure matrix shape {dep.shape} does not match {cfg.n_stations} stations")
    if dep.shape[0] != len(formations):
        raise ValueError("one formation id per train is required")
    if dm.n_stations != cfg.n_stations:
        raise ValueError("demand model and line disagree on station count")
    if np.any(np.diff(dep, axis=0) < -1e-9):
        raise ValueError("departures must be non-decreasing across trains at every station")

    caps = np.ascontiguousarray(cfg.capacities(formations), dtype=float)
    result = _kernels.load_trains(
        dep,
        caps,
        dm.period.start,
        dm.knots,
        dm.rates,
        dm.cum,
        dm.block_start,
    )
    alighted, demand, boarded, onboard, left, spare, od_demand, od_boarded, od_left, min_q = result
    if min_q < -NEGATIVE_TOLERANCE:
        raise InternalInvariantError(
            f"loading produced a negative quantity ({min_q:.3e}); simulation state is inconsistent"
        )
    return FlowResult(
        departures=dep,
        capacities=caps,
        alighted=alighted,
        demand=demand,
        boarded=boarded,
        onboard=onboard,
        left_behind=left,
        spare=spare,
        od_demand=od_demand,
        od_boarded=od_boarded,
        od_left=od_left,
    )


def spare_capacity_objective(fr: FlowResult) -> float:
    """Total slack capacity over every station a train departs from
    (the terminal, where trains only arrive, is excluded)."""
    return float(fr.spare[:, : fr.n_stations - 1].sum())


def waiting_time_objective(
    fr: FlowResult, dm: DemandModel, departures: Optional[np.ndarray] = None
) -> Tuple[float, float, float]:
    """Total waiting time split into (first-train, extra) components.

    Returns (total, first_wait, extra_wait). The extra component charges
    passengers left behind by train k with the headway to train k+1;
    passengers left by the final train have no further train inside the
    plan and are reported as residual, not waiting time.
    """
    dep = fr.departures if departures is None else np.asarray(departures, dtype=float)
    t1 = _kernels.first_wait_total(
        np.ascontiguousarray(dep),
        dm.period.start,
        dm.period.start,
        dm.knots,
        dm.origin_rates,
        dm.origin_cum,
        dm.origin_cum_t,
    )
    if fr.n_trains >= 2:
        gaps = np.diff(dep, axis=0)
        t2 = float((fr.left_behind[:-1, : fr.n_stations - 1] * gaps[:, : fr.n_stations - 1]).sum())
    else:
        t2 = 0.0
    return t1 + t2, float(t1), t2


def two_train_violation(fr: FlowResult) -> float:
    """Mass of passengers whose left-behind queue is not absorbed by the
    next train, i.e. who would wait for a third train. Zero means the
    at-most-two-trains rule holds everywhere."""
    if fr.n_trains < 2:
        return float(fr.left_behind.sum())
    excess = fr.left_behind[:-1] - fr.boarded[1:]
    return float(np.maximum(excess, 0.0).sum())


def residual_left_behind(fr: FlowResult) -> float:
    """Passengers still queued when the final train departs each station."""
    return float(fr.left_behind[-1].sum())


def flow_to_csv(fr: FlowResult, path, station_names: Optional[Sequence[str]] = None) -> None:
    """One row per (train, station) with all per-cell quantities.

    Passenger counts are written with two decimals; times keep four.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["train", "station", "station_name", "departure",
             "alighted", "demand", "boarded", "onboard", "left_behind", "spare"]
        )
        for k in range(fr.n_trains):
            for i in range(fr.n_stations):
                name = station_names[i] if station_names else ""
                w.writerow(
                    [
                        k + 1,
                        i + 1,
                        name,
                        f"{fr.departures[k, i]:.4f}",
                        f"{fr.alighted[k, i]:.2f}",
                        f"{fr.demand[k, i]:.2f}",
                        f"{fr.boarded[k, i]:.2f}",
                        f"{fr.onboard[k, i]:.2f}",
                        f"{fr.left_behind[k, i]:.2f}",
                        f"{fr.spare[k, i]:.2f}",
                    ]
                )
