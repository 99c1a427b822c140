"""Time-varying origin-destination demand for the line.

Arrival rates are piecewise constant over a shared breakpoint grid: the
reporting bins of the study period plus the edges of every feeder pulse.
All demand integrals are evaluated in closed form on that grid; nothing
is integrated numerically.
"""

import csv
import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import StudyPeriod

# commuter base table: {(origin, destination): per-bin rates in pax/min}
CommuterTable = Dict[Tuple[int, int], np.ndarray]


@dataclass(frozen=True)
class OuterArrival:
    """One feeder arrival (high-speed rail, flight, ...) delivering a
    passenger batch to the hub station.

    The batch enters the platform as a rectangular rate pulse starting at
    `scheduled_time`; `destination_split` maps destination station ->
    fraction of the batch (fractions sum to 1).
    """

    id: int
    scheduled_time: float
    passenger_count: float
    destination_split: Dict[int, float]

    def __post_init__(self):
        if self.passenger_count < 0:
            raise ValueError(f"arrival {self.id}: negative passenger count")
        fracs = np.array(list(self.destination_split.values()), dtype=float)
        if np.any(fracs < 0):
            raise ValueError(f"arrival {self.id}: negative destination fraction")
        if self.passenger_count > 0 and abs(fracs.sum() - 1.0) > 1e-9:
            raise ValueError(
                f"arrival {self.id}: destination fractions sum to {fracs.sum()}, expected 1"
            )


@dataclass(frozen=True)
class DelayScenario:
    """Realized feeder delays: arrival id -> delay in minutes."""

    shifts: Dict[int, float]

    def to_json(self) -> str:
        items = [{"id": int(i), "delay": float(d)} for i, d in sorted(self.shifts.items())]
        return json.dumps({"delays": items}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DelayScenario":
        data = json.loads(text)
        return cls({int(e["id"]): float(e["delay"]) for e in data["delays"]})


class DemandModel:
    """Piecewise-constant arrival-rate field over all OD pairs.

    Columns of the internal rate matrix are grouped by origin: origin i
    owns the contiguous block `block_start[i]:block_start[i+1]`, one
    column per destination i+1..N-1. `cum` is the running integral of
    each column's rate and `cum_t` the running integral of
    (t - period.start) * rate, which together give closed-form interval
    masses and first-train waiting times.
    """

    def __init__(self, period: StudyPeriod, n_stations: int, knots: np.ndarray, rates: np.ndarray):
        self.period = period
        self.n_stations = n_stations
        self.knots = np.asarray(knots, dtype=float)
        self.rates = np.asarray(rates, dtype=float)
        n = n_stations
        if self.rates.shape != (len(self.knots) - 1, n * (n - 1) // 2):
            raise ValueError("rate matrix shape does not match knots/stations")
        if np.any(self.rates < 0):
            raise ValueError("negative arrival rate")

        self.block_start = np.zeros(n + 1, dtype=np.int64)
        for i in range(n):
            self.block_start[i + 1] = self.block_start[i] + (n - 1 - i)

        widths = np.diff(self.knots)[:, None]
        self.cum = np.vstack([np.zeros(self.rates.shape[1]), np.cumsum(self.rates * widths, axis=0)])
        # moment integral uses times shifted by period.start to keep magnitudes small
        shifted = self.knots - period.start
        seg_moment = self.rates * ((shifted[1:] ** 2 - shifted[:-1] ** 2) / 2.0)[:, None]
        self.cum_t = np.vstack([np.zeros(self.rates.shape[1]), np.cumsum(seg_moment, axis=0)])

        # per-origin aggregates (destination sums), used for waiting-time totals
        self.origin_rates = np.zeros((self.rates.shape[0], n))
        self.origin_cum = np.zeros((self.cum.shape[0], n))
        self.origin_cum_t = np.zeros((self.cum.shape[0], n))
        for i in range(n):
            lo, hi = self.block_start[i], self.block_start[i + 1]
            if hi > lo:
                self.origin_rates[:, i] = self.rates[:, lo:hi].sum(axis=1)
                self.origin_cum[:, i] = self.cum[:, lo:hi].sum(axis=1)
                self.origin_cum_t[:, i] = self.cum_t[:, lo:hi].sum(axis=1)
        for arr in (self.knots, self.rates, self.cum, self.cum_t,
                    self.origin_rates, self.origin_cum, self.origin_cum_t):
            arr.setflags(write=False)

    def column(self, i: int, j: int) -> int:
        if not (0 <= i < j < self.n_stations):
            raise IndexError(f"no OD column for pair ({i}, {j})")
        return int(self.block_start[i] + (j - i - 1))

    def _segment_index(self, t: float) -> int:
        idx = int(np.searchsorted(self.knots, t, side="right")) - 1
        return min(max(idx, 0), len(self.knots) - 2)

    def _cum_at(self, col_cum: np.ndarray, col_rates: np.ndarray, t: float) -> float:
        t = min(max(t, self.knots[0]), self.knots[-1])
        s = self._segment_index(t)
        return col_cum[s] + col_rates[s] * (t - self.knots[s])

    def _cum_t_at(self, col_cum_t: np.ndarray, col_rates: np.ndarray, t: float) -> float:
        t = min(max(t, self.knots[0]), self.knots[-1])
        s = self._segment_index(t)
        a = self.knots[s] - self.period.start
        x = t - self.period.start
        return col_cum_t[s] + col_rates[s] * (x * x - a * a) / 2.0

    def interval_demand(self, i: int, j: int, t0: float, t1: float) -> float:
        """Passengers arriving at station i for destination j during [t0, t1].

        Queries outside the study period are clamped to it; pairs with
        j <= i carry no demand and return 0.
        """
        if j <= i or j >= self.n_stations or i < 0:
            return 0.0
        if t1 < t0:
            raise ValueError(f"empty interval reversed: [{t0}, {t1}]")
        c = self.column(i, j)
        return self._cum_at(self.cum[:, c], self.rates[:, c], t1) - self._cum_at(
            self.cum[:, c], self.rates[:, c], t0
        )

    def first_wait_integral(self, i: int, j: int, t0: float, depart: float) -> float:
        """Waiting time (pax-minutes) accumulated until `depart` by passengers
        arriving at station i for j during [t0, depart].

        Closed form per constant segment: a segment [a, b] with rate r
        contributes r * ((D-a)^2 - (D-b)^2) / 2.
        """
        if t0 > depart:
            raise ValueError("window start after departure")
        if j <= i or j >= self.n_stations or i < 0:
            return 0.0
        c = self.column(i, j)
        dc = self._cum_at(self.cum[:, c], self.rates[:, c], depart) - self._cum_at(
            self.cum[:, c], self.rates[:, c], t0
        )
        dm = self._cum_t_at(self.cum_t[:, c], self.rates[:, c], depart) - self._cum_t_at(
            self.cum_t[:, c], self.rates[:, c], t0
        )
        return (depart - self.period.start) * dc - dm

    def origin_interval_demand(self, i: int, t0: float, t1: float) -> float:
        """Total arrivals at origin i (all destinations) during [t0, t1]."""
        if not 0 <= i < self.n_stations:
            return 0.0
        return self._cum_at(self.origin_cum[:, i], self.origin_rates[:, i], t1) - self._cum_at(
            self.origin_cum[:, i], self.origin_rates[:, i], t0
        )

    def segments(self, i: int, j: int) -> List[Tuple[float, float, float]]:
        """Constant-rate pieces (start, end, rate) of one OD pair, zeros skipped."""
        c = self.column(i, j)
        out = []
        for s in range(len(self.knots) - 1):
            r = self.rates[s, c]
            if r > 0:
                out.append((float(self.knots[s]), float(self.knots[s + 1]), float(r)))
        return out

    def origin_segments(self, i: int) -> List[Tuple[float, float, float]]:
        out = []
        for s in range(len(self.knots) - 1):
            r = self.origin_rates[s, i]
            if r > 0:
                out.append((float(self.knots[s]), float(self.knots[s + 1]), float(r)))
        return out

    def total_demand(self) -> float:
        return float(self.cum[-1].sum())

    def od_pairs(self) -> Iterable[Tuple[int, int]]:
        n = self.n_stations
        return ((i, j) for i in range(n) for j in range(i + 1, n))


def _pulse_windows(outer: Sequence[OuterArrival], spread: float, period: StudyPeriod):
    """In-period [start, end) window and rate of each pulse; fully-late pulses drop."""
    windows = []
    for arr in outer:
        a = arr.scheduled_time
        b = arr.scheduled_time + spread
        lo, hi = max(a, period.start), min(b, period.end)
        if hi <= lo or arr.passenger_count == 0:
            continue
        windows.append((arr, lo, hi, arr.passenger_count / spread))
    return windows


def scale_commuter_hub_rows(
    base: CommuterTable,
    outer: Sequence[OuterArrival],
    hub_share: float,
    spread: float,
    period: StudyPeriod,
    hub_index: int,
) -> CommuterTable:
    """Rescale hub-origin commuter rates so feeder passengers make up
    `hub_share` of all hub-origin demand over the period.

    The calibration uses the scheduled feeder arrivals; delayed
    realizations must reuse the scheduled calibration rather than
    re-deriving it from shifted (possibly truncated) pulses.
    """
    if not 0 <= hub_share <= 1:
        raise ValueError("hub_share must lie in [0, 1]")
    outer_total = sum((hi - lo) * r for _, lo, hi, r in _pulse_windows(outer, spread, period))
    hub_rows = {od: r for od, r in base.items() if od[0] == hub_index}
    base_hub_total = sum(float(np.sum(r)) * period.bin_minutes for r in hub_rows.values())

    if outer_total == 0:
        if hub_share > 0 and base_hub_total > 0:
            raise ValueError("hub_share > 0 requires feeder arrivals with in-period mass")
        return dict(base)
    if hub_share == 0:
        raise ValueError("feeder arrivals present but hub_share is 0")
    if hub_share == 1 or base_hub_total == 0:
        scale = 0.0 if hub_share == 1 else 1.0
        if hub_share < 1 and base_hub_total == 0:
            raise ValueError("cannot reach hub_share < 1 with zero commuter demand at the hub")
    else:
        scale = outer_total * (1 - hub_share) / (hub_share * base_hub_total)

    out = dict(base)
    for od in hub_rows:
        out[od] = base[od] * scale
    return out


def assemble_demand_model(
    base: CommuterTable,
    outer: Sequence[OuterArrival],
    spread: float,
    period: StudyPeriod,
    n_stations: int,
    hub_index: int,
) -> DemandModel:
    """Overlay feeder pulses on the commuter base without rescaling anything."""
    if spread <= 0:
        raise ValueError("pulse spread must be positive")
    edges = list(period.bin_edges())
    windows = _pulse_windows(outer, spread, period)
    for _, lo, hi, _ in windows:
        edges.extend((lo, hi))
    knots = np.unique(np.asarray(edges, dtype=float))

    n_cols = n_stations * (n_stations - 1) // 2
    rates = np.zeros((len(knots) - 1, n_cols))
    block_start = np.concatenate([[0], np.cumsum(n_stations - 1 - np.arange(n_stations))])

    mids = (knots[:-1] + knots[1:]) / 2.0
    bin_of = np.clip(
        ((mids - period.start) / period.bin_minutes).astype(int), 0, period.n_bins - 1
    )
    for (i, j), per_bin in base.items():
        if not 0 <= i < j < n_stations:
            raise ValueError(f"commuter table has invalid OD pair ({i}, {j})")
        per_bin = np.asarray(per_bin, dtype=float)
        if per_bin.shape != (period.n_bins,):
            raise ValueError(f"OD pair ({i}, {j}): expected {period.n_bins} per-bin rates")
        col = block_start[i] + (j - i - 1)
        rates[:, col] += per_bin[bin_of]

    for arr, lo, hi, pulse_rate in windows:
        inside = (mids > lo) & (mids < hi)
        for j, frac in arr.destination_split.items():
            if not hub_index < j < n_stations:
                raise ValueError(f"arrival {arr.id}: destination {j} not downstream of the hub")
            col = block_start[hub_index] + (j - hub_index - 1)
            rates[inside, col] += pulse_rate * frac

    return DemandModel(period, n_stations, knots, rates)


def build_demand_model(
    base: CommuterTable,
    outer: Sequence[OuterArrival],
    hub_share: float,
    spread: float,
    period: StudyPeriod,
    n_stations: int,
    hub_index: int,
) -> DemandModel:
    """Calibrated demand field: commuter base scaled to the feeder share,
    plus one rectangular pulse per feeder arrival at the hub."""
    scaled = scale_commuter_hub_rows(base, outer, hub_share, spread, period, hub_index)
    return assemble_demand_model(scaled, outer, spread, period, n_stations, hub_index)


def sample_delay_scenario(
    outer: Sequence[OuterArrival],
    n_delayed: int,
    rng_seed,
    max_delay: float = 30.0,
) -> DelayScenario:
    """Pick `n_delayed` distinct feeder arrivals uniformly and draw each a
    delay uniform on (0, max_delay]. Deterministic given the seed."""
    if n_delayed < 0 or n_delayed > len(outer):
        raise ValueError(f"cannot delay {n_delayed} of {len(outer)} arrivals")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    ids = np.array([a.id for a in outer], dtype=np.int64)
    chosen = rng.choice(ids, size=n_delayed, replace=False)
    delays = max_delay - rng.uniform(0.0, max_delay, size=n_delayed)  # uniform on (0, max]
    return DelayScenario({int(i): float(d) for i, d in zip(chosen, delays)})


def apply_delay_scenario(
    outer: Sequence[OuterArrival], scenario: DelayScenario
) -> List[OuterArrival]:
    """Shift delayed arrivals later; truncation past the period end happens
    when the adjusted list is assembled into a DemandModel."""
    known = {a.id for a in outer}
    unknown = set(scenario.shifts) - known
    if unknown:
        raise ValueError(f"scenario references unknown arrival ids {sorted(unknown)}")
    out = []
    for a in outer:
        d = scenario.shifts.get(a.id, 0.0)
        if d == 0.0:
            out.append(a)
        else:
            out.append(
                OuterArrival(a.id, a.scheduled_time + d, a.passenger_count, a.destination_split)
            )
    return out


# ---------------------------------------------------------------------------
# synthetic case-study demand
# ---------------------------------------------------------------------------

def synthetic_demand_inputs(
    period: StudyPeriod,
    n_stations: int,
    hub_index: int,
    seed,
    peak_bin_target: float,
    hub_share: float = 0.6,
    spread: float = 10.0,
    n_pulses: int = 10,
    trend_end_factor: float = 0.40,
    noise: float = 0.25,
    upstream_level: float = 0.03,
    downstream_level: float = 0.08,
) -> Tuple[CommuterTable, List[OuterArrival]]:
    """Generate a commuter table and feeder schedule shaped like a morning
    peak at a hub: per-bin demand with a downward linear trend and
    multiplicative noise, plus periodic feeder pulses.

    Calibrated so the busiest bin's hub-origin demand equals
    `peak_bin_target` passengers exactly (both ingredients are rescaled
    together, which leaves the feeder share untouched). Origins before
    the hub stay light and mostly short-range so through-riders do not
    swamp the hub's residual capacity, mirroring a suburb-bound peak.
    """
    rng = np.random.default_rng(seed)
    n_bins = period.n_bins
    trend = np.linspace(1.0, trend_end_factor, n_bins)
    hub_bin_total = trend * rng.uniform(1.0 - noise, 1.0 + noise, size=n_bins)

    down = np.arange(hub_index + 1, n_stations)
    if len(down) == 0:
        raise ValueError("hub must have downstream stations")
    hub_dest_w = rng.dirichlet(np.full(len(down), 2.0))

    base: CommuterTable = {}
    commuter_bin = (1.0 - hub_share) * hub_bin_total
    for j, w in zip(down, hub_dest_w):
        base[(hub_index, j)] = commuter_bin * w / period.bin_minutes

    for i in range(n_stations - 1):
        if i == hub_index:
            continue
        dests = np.arange(i + 1, n_stations)
        if i < hub_index:
            level = upstream_level
            alpha = np.where(dests <= hub_index + 2, 2.0, 0.5)
        else:
            level = downstream_level
            alpha = np.full(len(dests), 2.0)
        w = rng.dirichlet(alpha)
        shape = trend * rng.uniform(1.0 - noise, 1.0 + noise, size=n_bins)
        origin_bin = level * rng.uniform(0.5, 1.5) * shape * np.mean(hub_bin_total)
        for j, wj in zip(dests, w):
            base[(i, j)] = origin_bin * wj / period.bin_minutes

    pulse_total = hub_share * float(np.sum(hub_bin_total))
    slots = period.start + (np.arange(n_pulses) + 0.5) * period.duration / n_pulses
    times = slots + rng.uniform(-1.5, 1.5, size=n_pulses)
    weights = np.interp(times, period.start + period.bin_minutes * (np.arange(n_bins) + 0.5),
                        trend) * rng.uniform(0.7, 1.3, size=n_pulses)
    counts = pulse_total * weights / weights.sum()
    outer = [
        OuterArrival(
            id=x + 1,
            scheduled_time=float(t),
            passenger_count=float(c),
            destination_split={int(j): float(w) for j, w in zip(down, hub_dest_w)},
        )
        for x, (t, c) in enumerate(zip(times, counts))
    ]

    # one linear rescale pins the busiest bin exactly on target
    dm = build_demand_model(base, outer, hub_share, spread, period, n_stations, hub_index)
    edges = period.bin_edges()
    peak = max(
        dm.origin_interval_demand(hub_index, edges[b], edges[b + 1]) for b in range(n_bins)
    )
    factor = peak_bin_target / peak
    base = {od: r * factor for od, r in base.items()}
    outer = [
        OuterArrival(a.id, a.scheduled_time, a.passenger_count * factor, a.destination_split)
        for a in outer
    ]
    return base, outer


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

def load_commuter_csv(path, period: StudyPeriod, n_stations: int) -> CommuterTable:
    """Read a commuter rate table; columns origin, destination, bin_start,
    rate with 1-based station numbers and bin_start in minutes from midnight."""
    table: CommuterTable = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(_strip_comments(fh)):
            i = int(row["origin"]) - 1
            j = int(row["destination"]) - 1
            if not 0 <= i < j < n_stations:
                raise ValueError(f"commuter CSV: invalid OD pair {row['origin']}->{row['destination']}")
            b = (float(row["bin_start"]) - period.start) / period.bin_minutes
            bi = int(round(b))
            if abs(b - bi) > 1e-9 or not 0 <= bi < period.n_bins:
                raise ValueError(f"commuter CSV: bin_start {row['bin_start']} off the bin grid")
            table.setdefault((i, j), np.zeros(period.n_bins))[bi] += float(row["rate"])
    return table


def write_commuter_csv(path, table: CommuterTable, period: StudyPeriod) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["origin", "destination", "bin_start", "rate"])
        for (i, j) in sorted(table):
            for b, r in enumerate(table[(i, j)]):
                if r != 0:
                    w.writerow([i + 1, j + 1, f"{period.start + b * period.bin_minutes:.4f}", f"{r:.9g}"])


def load_outer_csv(path, n_stations: int) -> List[OuterArrival]:
    """Read the feeder schedule; columns id, time, count plus one `to_<s>`
    column per destination station (1-based) holding split fractions."""
    arrivals = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(_strip_comments(fh))
        for row in reader:
            split = {}
            for name, val in row.items():
                if name.startswith("to_") and val not in (None, ""):
                    j = int(name[3:]) - 1
                    if not 0 <= j < n_stations:
                        raise ValueError(f"outer CSV: destination column {name} out of range")
                    f = float(val)
                    if f != 0:
                        split[j] = f
            arrivals.append(
                OuterArrival(
                    id=int(row["id"]),
                    scheduled_time=float(row["time"]),
                    passenger_count=float(row["count"]),
                    destination_split=split,
                )
            )
    return sorted(arrivals, key=lambda a: a.scheduled_time)


def write_outer_csv(path, arrivals: Sequence[OuterArrival], n_stations: int) -> None:
    dest_cols = [f"to_{j + 1}" for j in range(n_stations)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "time", "count", *dest_cols])
        for a in sorted(arrivals, key=lambda x: x.id):
            row = [a.id, f"{a.scheduled_time:.4f}", f"{a.passenger_count:.9g}"]
            row += [f"{a.destination_split.get(j, 0.0):.9g}" for j in range(n_stations)]
            w.writerow(row)


def _strip_comments(fh):
    for line in fh:
        if not line.lstrip().startswith("#"):
            yield line
