"""Per-bin passenger metrics derived from a loading result.

Waiting time is attributed to the reporting bin a passenger *arrived*
in. Because the loading model only keeps window aggregates, the exact
arrival-time composition of boarders is reconstructed here by replaying
each station's queue as FIFO segments of the arrival-rate function:
boarding consumes the queue from the front, so the left-behind of every
train are its window's latest arrivals, matching the per-passenger
reference model. Passengers that never board (still queued after the
final train) have no defined waiting time; they are excluded from wait
averages and reported as unserved.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import FlowResult, StudyPeriod
from .demand import DemandModel


@dataclass
class BinMetrics:
    """Per-bin demand/boarded/average-wait series plus totals."""

    bin_start: np.ndarray  # (B,)
    demand: np.ndarray  # (B,) arrivals in the bin
    boarded: np.ndarray  # (B,) boardings of trains departing in the bin
    wait_mass: np.ndarray  # (B,) served passengers, by arrival bin
    wait_total: np.ndarray  # (B,) their accumulated waiting time
    unserved: np.ndarray  # (B,) arrivals never served, by arrival bin
    warmup_end: float

    @property
    def avg_wait(self) -> np.ndarray:
        """Average wait of served passengers per arrival bin; 0 where the bin
        has no served arrivals (see `empty_bins`)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(self.wait_mass > 0, self.wait_total / np.maximum(self.wait_mass, 1e-300), 0.0)
        return out

    @property
    def empty_bins(self) -> np.ndarray:
        return self.wait_mass <= 0

    def _post(self) -> np.ndarray:
        return self.bin_start >= self.warmup_end - 1e-9

    @property
    def post_warmup_avg_waits(self) -> np.ndarray:
        return self.avg_wait[self._post()]

    @property
    def mean_avg_wait(self) -> float:
        """Unweighted mean of the post-warmup per-bin average waits."""
        w = self.post_warmup_avg_waits
        return float(w.mean()) if len(w) else 0.0

    @property
    def std_avg_wait(self) -> float:
        w = self.post_warmup_avg_waits
        return float(w.std(ddof=0)) if len(w) else 0.0

    @property
    def overall_avg_wait(self) -> float:
        """Served-passenger-weighted average wait over post-warmup bins."""
        sel = self._post()
        mass = self.wait_mass[sel].sum()
        return float(self.wait_total[sel].sum() / mass) if mass > 0 else 0.0

    @property
    def unserved_total(self) -> float:
        return float(self.unserved[self._post()].sum())


def compute_bin_metrics(
    fr: FlowResult,
    dm: DemandModel,
    period: StudyPeriod,
    warmup: float = 0.0,
    stations: Optional[Sequence[int]] = None,
) -> BinMetrics:
    """Bin-level demand, supply and waiting metrics.

    `stations` restricts the tally to the given origin stations (e.g. just
    the hub); the default covers every boarding station.
    """
    if warmup >= period.duration:
        raise ValueError("warmup window swallows the whole period")
    n_bins = period.n_bins
    edges = period.bin_edges()
    chosen = list(stations) if stations is not None else list(range(fr.n_stations - 1))

    demand = np.zeros(n_bins)
    boarded = np.zeros(n_bins)
    wait_mass = np.zeros(n_bins)
    wait_total = np.zeros(n_bins)
    unserved = np.zeros(n_bins)

    for b in range(n_bins):
        demand[b] = sum(dm.origin_interval_demand(i, edges[b], edges[b + 1]) for i in chosen)

    for i in chosen:
        for k in range(fr.n_trains):
            t = fr.departures[k, i]
            if period.start <= t:
                b = min(int((t - period.start) / period.bin_minutes), n_bins - 1)
                boarded[b] += fr.boarded[k, i]
        _accumulate_station_waits(fr, dm, period, i, wait_mass, wait_total, unserved)

    return BinMetrics(
        bin_start=edges[:-1],
        demand=demand,
        boarded=boarded,
        wait_mass=wait_mass,
        wait_total=wait_total,
        unserved=unserved,
        warmup_end=period.start + warmup,
    )


def _accumulate_station_waits(fr, dm, period, i, wait_mass, wait_total, unserved):
    """FIFO segment-queue replay of one station, crediting waits by arrival bin."""
    n_bins = period.n_bins
    edges = period.bin_edges()
    rate_segs = dm.origin_segments(i)  # [(a, b, rate)] in time order
    seg_ptr = 0
    cursor = period.start
    queue = []  # [start, end, rate] arrival pieces not yet boarded, FIFO

    def feed(until):
        nonlocal seg_ptr, cursor
        until = min(until, period.end)
        while cursor < until - 1e-12 and seg_ptr < len(rate_segs):
            a, b, r = rate_segs[seg_ptr]
            lo = max(a, cursor)
            hi = min(b, until)
            if hi > lo:
                queue.append([lo, hi, r])
                cursor = hi
            if b <= until + 1e-12:
                seg_ptr += 1
            else:
                break
        cursor = max(cursor, until)

    def credit(a, b, r, depart):
        # split the piece at bin boundaries so waits land in arrival bins
        lo_bin = min(int((a - period.start) / period.bin_minutes), n_bins - 1)
        hi_bin = min(int((b - period.start - 1e-12) / period.bin_minutes), n_bins - 1)
        for bi in range(lo_bin, hi_bin + 1):
            x = max(a, edges[bi])
            y = min(b, edges[bi + 1])
            if y <= x:
                continue
            wait_mass[bi] += r * (y - x)
            wait_total[bi] += r * ((depart - x) ** 2 - (depart - y) ** 2) / 2.0

    for k in range(fr.n_trains):
        depart = fr.departures[k, i]
        feed(depart)
        need = fr.boarded[k, i]
        while need > 1e-9 and queue:
            a, b, r = queue[0]
            piece = r * (b - a)
            if piece <= need + 1e-12:
                credit(a, b, r, depart)
                need -= piece
                queue.pop(0)
            else:
                cut = a + need / r
                credit(a, cut, r, depart)
                queue[0][0] = cut
                need = 0.0

    feed(period.end)  # arrivals after the final departure never even queued
    for a, b, r in queue:  # stranded in the queue or arrived too late: unserved
        lo_bin = min(int((a - period.start) / period.bin_minutes), n_bins - 1)
        hi_bin = min(int((b - period.start - 1e-12) / period.bin_minutes), n_bins - 1)
        for bi in range(lo_bin, hi_bin + 1):
            x, y = max(a, edges[bi]), min(b, edges[bi + 1])
            if y > x:
                unserved[bi] += r * (y - x)


def travel_times(fr: FlowResult) -> np.ndarray:
    """Terminal arrival minus first departure, per train."""
    return fr.departures[:, -1] - fr.departures[:, 0]


def left_behind_matrix(fr: FlowResult, warmup_start: float) -> np.ndarray:
    """Left-behind counts with cells departing before `warmup_start` zeroed."""
    mask = fr.departures >= warmup_start - 1e-9
    return np.where(mask, fr.left_behind, 0.0)
