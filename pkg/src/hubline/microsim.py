"""Brute-force per-passenger replay of the line, used as a reference model.

Passengers are individual (possibly fractionally weighted) arrival events
queued first-come-first-serve at their origin station. Each departing
train discharges its alighting passengers, then boards the queue from the
front up to its residual capacity, splitting the frontier event when
capacity runs out mid-event. Only intended for small instances.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .demand import DemandModel


@dataclass
class PassengerEvent:
    time: float
    origin: int
    destination: int
    weight: float = 1.0


@dataclass
class BoardingRecord:
    """One (possibly partial) passenger batch that boarded or was stranded."""

    arrival_time: float
    origin: int
    destination: int
    weight: float
    candidate_train: int  # first train departing at/after arrival
    boarded_train: Optional[int]  # None = never boarded
    first_wait: float  # per passenger, minutes
    extra_wait: float  # per passenger, minutes


@dataclass
class MicroResult:
    boarded: np.ndarray  # (K, N)
    left_behind: np.ndarray  # (K, N)
    onboard: np.ndarray  # (K, N)
    alighted: np.ndarray  # (K, N)
    first_wait_total: float
    extra_wait_total: float
    records: List[BoardingRecord] = field(repr=False, default_factory=list)

    @property
    def total_wait(self) -> float:
        return self.first_wait_total + self.extra_wait_total

    def served_wait_by_bin(self, period, warmup: float = 0.0):
        """(mass, wait) of passengers that eventually boarded, keyed by the
        reporting bin of their arrival. Mirrors the aggregate bin metrics."""
        n_bins = period.n_bins
        mass = np.zeros(n_bins)
        wait = np.zeros(n_bins)
        for rec in self.records:
            if rec.boarded_train is None:
                continue
            b = int((rec.arrival_time - period.start) / period.bin_minutes)
            b = min(max(b, 0), n_bins - 1)
            mass[b] += rec.weight
            wait[b] += rec.weight * (rec.first_wait + rec.extra_wait)
        return mass, wait


def discretize_demand(
    dm: DemandModel,
    events_origin_split: Optional[Sequence[float]] = None,
    split_times: Optional[np.ndarray] = None,
) -> List[PassengerEvent]:
    """Turn the rate field into weighted arrival events, deterministically.

    Each constant-rate piece of mass m becomes ceil(m) events of equal
    weight at evenly spaced interior points, so piece totals are exact.
    Passing `split_times` (typically the departure matrix) additionally
    cuts pieces at those instants, which makes the event mass on each
    side of every cut exact as well.
    """
    cuts = np.unique(split_times) if split_times is not None else np.empty(0)
    events: List[PassengerEvent] = []
    for i, j in dm.od_pairs():
        for a, b, r in dm.segments(i, j):
            inner = cuts[(cuts > a) & (cuts < b)]
            edges = np.concatenate([[a], inner, [b]])
            for lo, hi in zip(edges[:-1], edges[1:]):
                m = r * (hi - lo)
                if m <= 0:
                    continue
                n = max(int(math.ceil(m - 1e-12)), 1)
                w = m / n
                for q in range(n):
                    t = lo + (hi - lo) * (q + 0.5) / n
                    events.append(PassengerEvent(t, i, j, w))
    events.sort(key=lambda e: e.time)
    return events


def micro_simulate(
    departures: np.ndarray,
    capacities: Sequence[float],
    n_stations: int,
    events: Sequence[PassengerEvent],
    t_start: float,
) -> MicroResult:
    """Replay every passenger individually under FCFS boarding.

    A passenger's first wait runs from arrival to the departure of the
    first train leaving at/after it; boarding a later train adds the
    difference as extra wait. Passengers still queued after the final
    train accrue extra wait up to that train's departure and are marked
    stranded.
    """
    dep = np.asarray(departures, dtype=float)
    n_trains = dep.shape[0]
    caps = np.asarray(capacities, dtype=float)

    by_origin: List[List[PassengerEvent]] = [[] for _ in range(n_stations)]
    for ev in sorted(events, key=lambda e: e.time):
        if not 0 <= ev.origin < n_stations or not ev.origin < ev.destination < n_stations:
            raise ValueError(f"event with invalid OD pair ({ev.origin}, {ev.destination})")
        by_origin[ev.origin].append(ev)

    def candidate_train(i: int, t: float) -> Optional[int]:
        k = int(np.searchsorted(dep[:, i], t, side="left"))
        return k if k < n_trains else None

    boarded = np.zeros((n_trains, n_stations))
    left = np.zeros((n_trains, n_stations))
    onboard = np.zeros((n_trains, n_stations))
    alighted = np.zeros((n_trains, n_stations))
    records: List[BoardingRecord] = []
    first_total = 0.0
    extra_total = 0.0

    # per-station FIFO queue entries: [weight, arrival, destination, candidate]
    queues: List[List[list]] = [[] for _ in range(n_stations)]
    heads = [0] * n_stations  # queue consumption pointer
    fed = [0] * n_stations  # events already moved into the queue

    for k in range(n_trains):
        onboard_to = np.zeros(n_stations)
        gamma = 0.0
        for i in range(n_stations):
            a = onboard_to[i]
            onboard_to[i] = 0.0
            gamma -= a
            alighted[k, i] = a

            src = by_origin[i]
            while fed[i] < len(src) and src[fed[i]].time <= dep[k, i] + 1e-12:
                ev = src[fed[i]]
                cand = candidate_train(i, ev.time)
                queues[i].append([ev.weight, ev.time, ev.destination, cand])
                fed[i] += 1

            resid = caps[k] - gamma
            q = queues[i]
            while resid > 1e-12 and heads[i] < len(q):
                entry = q[heads[i]]
                take = min(entry[0], resid)
                cand = entry[3] if entry[3] is not None else k
                fw = dep[cand, i] - entry[1]
                ew = dep[k, i] - dep[cand, i]
                records.append(
                    BoardingRecord(entry[1], i, entry[2], take, cand, k, fw, ew)
                )
                first_total += take * fw
                extra_total += take * ew
                onboard_to[entry[2]] += take
                gamma += take
                resid -= take
                boarded[k, i] += take
                if take >= entry[0] - 1e-15:
                    heads[i] += 1
                else:
                    entry[0] -= take
            left[k, i] = sum(e[0] for e in q[heads[i]:])
            onboard[k, i] = gamma

    # stranded passengers: queue remains after the final train
    for i in range(n_stations):
        for entry in queues[i][heads[i]:]:
            w, t, dest, cand = entry
            if cand is None:
                continue  # arrived after every train; no wait is attributed
            fw = dep[cand, i] - t
            ew = dep[n_trains - 1, i] - dep[cand, i]
            first_total += w * fw
            extra_total += w * ew
            records.append(BoardingRecord(t, i, dest, w, cand, None, fw, ew))

    return MicroResult(
        boarded=boarded,
        left_behind=left,
        onboard=onboard,
        alighted=alighted,
        first_wait_total=first_total,
        extra_wait_total=extra_total,
        records=records,
    )
