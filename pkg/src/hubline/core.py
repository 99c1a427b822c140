"""Domain types for a one-direction transit line and structural validation.

Conventions used across the package:

* clock times are minutes from midnight (floats, e.g. 7:30 -> 450.0),
  durations are minutes;
* stations and trains are 0-based indices (config files use 1-based
  station numbers and are converted on load, see `hubline.config`);
* passenger quantities are real-valued; rounding happens only when
  reports are written.
"""

import json as _json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Violation:
    """One violated structural constraint, located where possible."""

    code: str
    message: str
    train: Optional[int] = None
    station: Optional[int] = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set:
        return {v.code for v in self.violations}

    def summary(self) -> str:
        if self.ok:
            return "valid"
        return "; ".join(v.message for v in self.violations)


@dataclass(frozen=True)
class StudyPeriod:
    """Service window under study, discretized into equal reporting bins."""

    start: float
    end: float
    bin_minutes: float = 5.0

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"period start {self.start} must precede end {self.end}")
        if self.bin_minutes <= 0:
            raise ValueError("bin width must be positive")
        n = (self.end - self.start) / self.bin_minutes
        if abs(n - round(n)) > 1e-9:
            raise ValueError(
                f"bin width {self.bin_minutes} does not divide the {self.end - self.start}-minute period"
            )

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def n_bins(self) -> int:
        return int(round(self.duration / self.bin_minutes))

    def bin_edges(self) -> np.ndarray:
        return self.start + self.bin_minutes * np.arange(self.n_bins + 1)


@dataclass(frozen=True)
class FormationType:
    """A train composition option: `car_count` cars give `capacity` seats+standees."""

    id: int
    car_count: int
    capacity: float

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError(f"formation {self.id}: capacity must be positive")

    @classmethod
    def from_cars(cls, id: int, car_count: int, per_car_capacity: float) -> "FormationType":
        return cls(id=id, car_count=car_count, capacity=car_count * per_car_capacity)


@dataclass(frozen=True)
class LineConfig:
    """Static description of the line: stations, running times, hub, fleet options."""

    station_names: tuple
    run_times: np.ndarray  # N-1 inter-station running times, minutes
    hub_index: int  # 0-based position of the hub station
    formations: tuple  # available FormationType options

    def __post_init__(self):
        object.__setattr__(self, "station_names", tuple(self.station_names))
        object.__setattr__(self, "run_times", _frozen_array(self.run_times))
        object.__setattr__(self, "formations", tuple(self.formations))

    @property
    def n_stations(self) -> int:
        return len(self.station_names)

    @property
    def formation_ids(self) -> tuple:
        return tuple(f.id for f in self.formations)

    def formation(self, formation_id: int) -> FormationType:
        for f in self.formations:
            if f.id == formation_id:
                return f
        raise KeyError(f"unknown formation id {formation_id}")

    def capacities(self, formation_ids: Sequence[int]) -> np.ndarray:
        return np.array([self.formation(fid).capacity for fid in formation_ids])


@dataclass(frozen=True)
class OperationBounds:
    """Operating limits: headway band, dwell band, and the holding-control cap."""

    headway_min: float
    headway_max: float
    dwell_min: float
    dwell_max: float
    hold_max: float = 0.0

    def __post_init__(self):
        if not 0 < self.headway_min <= self.headway_max:
            raise ValueError("need 0 < headway_min <= headway_max")
        if not 0 <= self.dwell_min <= self.dwell_max:
            raise ValueError("need 0 <= dwell_min <= dwell_max")
        if self.hold_max < 0:
            raise ValueError("hold_max must be non-negative")


@dataclass(frozen=True)
class TrainPlan:
    """Stage-1 decision variables for K trains on an N-station line.

    `formations[k]` is the formation id of train k, `first_departures[k]`
    its departure time from station 0, and `dwell_times[k, c]` its dwell
    at intermediate station c+1 (stations 1..N-2; the terminal has no
    dwell and station 0's dwell is absorbed into the first departure).
    """

    formations: tuple
    first_departures: np.ndarray  # (K,)
    dwell_times: np.ndarray  # (K, N-2)

    def __post_init__(self):
        object.__setattr__(self, "formations", tuple(int(f) for f in self.formations))
        object.__setattr__(self, "first_departures", _frozen_array(self.first_departures))
        object.__setattr__(self, "dwell_times", _frozen_array(np.atleast_2d(self.dwell_times)))

    @property
    def n_trains(self) -> int:
        return len(self.formations)


@dataclass(frozen=True)
class HoldingPlan:
    """Signed per-station dwell adjustments; negative values depart early.

    Shape (K, N-2), aligned with TrainPlan.dwell_times.
    """

    holds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "holds", _frozen_array(np.atleast_2d(self.holds)))

    @property
    def n_trains(self) -> int:
        return self.holds.shape[0]

    @classmethod
    def zero(cls, n_trains: int, n_stations: int) -> "HoldingPlan":
        return cls(np.zeros((n_trains, max(n_stations - 2, 0))))


@dataclass
class FlowResult:
    """Per-(train, station) outcome of a loading simulation.

    2-D arrays are indexed [train, station]; `od_*` arrays add the
    destination station as the third axis. `headways[k, i]` is the gap
    between trains k and k+1 at station i.
    """

    departures: np.ndarray  # (K, N); final column is the terminal arrival time
    capacities: np.ndarray  # (K,)
    alighted: np.ndarray  # (K, N)
    demand: np.ndarray  # (K, N) waiting passengers when the train leaves
    boarded: np.ndarray  # (K, N)
    onboard: np.ndarray  # (K, N)
    left_behind: np.ndarray  # (K, N)
    spare: np.ndarray  # (K, N)
    od_demand: np.ndarray = field(repr=False, default=None)  # (K, N, N)
    od_boarded: np.ndarray = field(repr=False, default=None)  # (K, N, N)
    od_left: np.ndarray = field(repr=False, default=None)  # (K, N, N)

    @property
    def n_trains(self) -> int:
        return self.departures.shape[0]

    @property
    def n_stations(self) -> int:
        return self.departures.shape[1]

    @property
    def headways(self) -> np.ndarray:
        return np.diff(self.departures, axis=0)


class InternalInvariantError(RuntimeError):
    """A simulation quantity violated a balance law; indicates a logic fault."""


def plan_to_json(plan: TrainPlan) -> str:
    return _json.dumps(
        {
            "formations": list(plan.formations),
            "first_departures": [float(x) for x in plan.first_departures],
            "dwell_times": [[float(x) for x in row] for row in plan.dwell_times],
        },
        indent=2,
    )


def plan_from_json(text: str) -> TrainPlan:
    doc = _json.loads(text)
    return TrainPlan(
        formations=tuple(doc["formations"]),
        first_departures=np.array(doc["first_departures"], dtype=float),
        dwell_times=np.array(doc["dwell_times"], dtype=float),
    )


def holding_to_json(holding: HoldingPlan) -> str:
    return _json.dumps(
        {"holds": [[float(x) for x in row] for row in holding.holds]}, indent=2
    )


def holding_from_json(text: str) -> HoldingPlan:
    return HoldingPlan(np.array(_json.loads(text)["holds"], dtype=float))


def propagate_departures(
    first_departures: np.ndarray,
    dwell_times: np.ndarray,
    run_times: np.ndarray,
    holds: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Forward recursion for the (K, N) departure matrix.

    Departure from station i+1 = departure from i + running time +
    dwell (+ holding adjustment) at i+1. The last column is the arrival
    time at the terminal, which has no dwell.
    """
    first = np.asarray(first_departures, dtype=float)
    dwells = np.atleast_2d(np.asarray(dwell_times, dtype=float))
    runs = np.asarray(run_times, dtype=float)
    n_stations = len(runs) + 1
    k = len(first)
    if dwells.shape != (k, max(n_stations - 2, 0)):
        raise ValueError(
            f"dwell matrix shape {dwells.shape} does not match {k} trains x {n_stations - 2} intermediate stations"
        )
    eff = dwells if holds is None else dwells + np.atleast_2d(np.asarray(holds, dtype=float))
    dep = np.empty((k, n_stations))
    dep[:, 0] = first
    for i in range(1, n_stations - 1):
        dep[:, i] = dep[:, i - 1] + runs[i - 1] + eff[:, i - 1]
    if n_stations >= 2:
        dep[:, n_stations - 1] = dep[:, n_stations - 2] + runs[n_stations - 2]
    return dep


def last_departure_floor(n_trains: int, bounds: OperationBounds, period: StudyPeriod) -> float:
    """Earliest allowed departure of the final train from station 0.

    The floor `end - headway_max` only binds when the headway ceiling
    lets some plan reach it; otherwise no plan could satisfy it together
    with the first-departure window and the headway band, and it is
    treated as vacuous (-inf).
    """
    if (n_trains + 1) * bounds.headway_max >= period.duration:
        return period.end - bounds.headway_max
    return -np.inf


def validate_line(cfg: LineConfig) -> ValidationReport:
    """Report every structural problem in a line description; never raises."""
    violations = []
    n = cfg.n_stations
    if n < 2:
        violations.append(Violation("too_few_stations", f"line has {n} stations, need at least 2"))
    if len(cfg.run_times) != max(n - 1, 0):
        violations.append(
            Violation(
                "run_time_count",
                f"{len(cfg.run_times)} running times for {n} stations (need {n - 1})",
            )
        )
    for i, r in enumerate(cfg.run_times):
        if r <= 0:
            violations.append(
                Violation("non_positive_run_time", f"non-positive run time {r} on segment {i}", station=i)
            )
    if not 0 <= cfg.hub_index < n:
        violations.append(
            Violation("hub_out_of_range", f"hub index {cfg.hub_index} outside 0..{n - 1}")
        )
    if not cfg.formations:
        violations.append(Violation("empty_catalog", "formation catalog is empty"))
    seen = set()
    for f in cfg.formations:
        if f.id in seen:
            violations.append(Violation("duplicate_formation", f"duplicate formation id {f.id}"))
        seen.add(f.id)
    return ValidationReport(tuple(violations))


def validate_plan(
    plan: TrainPlan,
    cfg: LineConfig,
    bounds: OperationBounds,
    period: StudyPeriod,
) -> ValidationReport:
    """Report every operating-constraint violation of a train plan.

    Checks formation membership, the first/last departure windows, dwell
    bounds, and the headway band at every station (headways at downstream
    stations shift with dwell differences between consecutive trains).
    Dimension mismatches raise ValueError; constraint violations are
    reported, never raised.
    """
    k = plan.n_trains
    n = cfg.n_stations
    if len(plan.first_departures) != k:
        raise ValueError("first_departures length does not match formation count")
    if plan.dwell_times.shape != (k, max(n - 2, 0)):
        raise ValueError(
            f"dwell matrix shape {plan.dwell_times.shape}, expected {(k, n - 2)}"
        )

    violations = []
    catalog = set(cfg.formation_ids)
    for idx, fid in enumerate(plan.formations):
        if fid not in catalog:
            violations.append(
                Violation("unknown_formation", f"train {idx}: formation {fid} not in catalog", train=idx)
            )

    first = plan.first_departures[0]
    if first < period.start - 1e-9:
        violations.append(
            Violation("first_departure_early", f"first departure {first:.3f} before period start", train=0)
        )
    if first > period.start + bounds.headway_max + 1e-9:
        violations.append(
            Violation(
                "first_departure_late",
                f"first departure {first:.3f} more than one max headway after period start",
                train=0,
            )
        )
    last = plan.first_departures[-1]
    floor = last_departure_floor(k, bounds, period)
    if last < floor - 1e-9:
        violations.append(
            Violation(
                "last_departure_early",
                f"last departure {last:.3f} more than one max headway before period end",
                train=k - 1,
            )
        )
    if last > period.end + 1e-9:
        violations.append(
            Violation("last_departure_late", f"last departure {last:.3f} after period end", train=k - 1)
        )

    for (ti, si), dw in np.ndenumerate(plan.dwell_times):
        if dw < bounds.dwell_min - 1e-9 or dw > bounds.dwell_max + 1e-9:
            violations.append(
                Violation(
                    "dwell_out_of_bounds",
                    f"train {ti} station {si + 1}: dwell {dw:.3f} outside "
                    f"[{bounds.dwell_min}, {bounds.dwell_max}]",
                    train=ti,
                    station=si + 1,
                )
            )

    dep = propagate_departures(plan.first_departures, plan.dwell_times, cfg.run_times)
    gaps = np.diff(dep, axis=0)
    for (ki, si), g in np.ndenumerate(gaps):
        if g < bounds.headway_min - 1e-9:
            violations.append(
                Violation(
                    "headway_below_min",
                    f"trains {ki}/{ki + 1} at station {si}: headway {g:.3f} < {bounds.headway_min}",
                    train=ki,
                    station=si,
                )
            )
        elif g > bounds.headway_max + 1e-9:
            violations.append(
                Violation(
                    "headway_above_max",
                    f"trains {ki}/{ki + 1} at station {si}: headway {g:.3f} > {bounds.headway_max}",
                    train=ki,
                    station=si,
                )
            )
    return ValidationReport(tuple(violations))
