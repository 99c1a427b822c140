"""First optimization stage: choose each train's formation, its departure
from the first station, and its intermediate dwell times, minimizing
total slack capacity.

Chromosome layout (length K + K + K*(N-2)):

    [formation choice index per train | first departures | dwell matrix row-major]

Departure and dwell genes are repaired by projection (clamping into the
window each gene has given its neighbours), so every evaluated
individual decodes to a plan that passes `core.validate_plan`.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import (
    LineConfig,
    OperationBounds,
    StudyPeriod,
    TrainPlan,
    last_departure_floor,
    validate_plan,
)
from .demand import DemandModel
from .ga import EvolutionResult, GAParams, evolve
from .simulator import (
    propagate_timetable,
    simulate_loading,
    spare_capacity_objective,
    two_train_violation,
)

FITNESS_EPS = 1e-9


class ConfigurationError(ValueError):
    """The combination of train count, operating bounds and period cannot
    produce any feasible plan."""


def check_stage1_feasible(
    n_trains: int, bounds: OperationBounds, period: StudyPeriod
) -> None:
    if n_trains < 1:
        raise ConfigurationError("need at least one train")
    if n_trains >= 2 and (n_trains - 1) * bounds.headway_min > period.duration + 1e-9:
        raise ConfigurationError(
            f"{n_trains} trains at a minimum headway of {bounds.headway_min} min need "
            f"{(n_trains - 1) * bounds.headway_min:.2f} min, more than the "
            f"{period.duration:.2f}-min period: the departure windows and headway band "
            "cannot all hold"
        )


class FormationTimetableProblem:
    """GA adapter for the formation/timetable stage."""

    def __init__(
        self,
        cfg: LineConfig,
        dm: DemandModel,
        bounds: OperationBounds,
        period: StudyPeriod,
        n_trains: int,
        formation_choices: Optional[Sequence[int]] = None,
        penalty_weight: Optional[float] = None,
    ):
        check_stage1_feasible(n_trains, bounds, period)
        self.cfg = cfg
        self.dm = dm
        self.bounds = bounds
        self.period = period
        self.n_trains = n_trains
        self.choices = tuple(formation_choices) if formation_choices else cfg.formation_ids
        unknown = set(self.choices) - set(cfg.formation_ids)
        if unknown:
            raise ConfigurationError(f"formation choices {sorted(unknown)} not in the catalog")
        self.penalty = (
            penalty_weight
            if penalty_weight is not None
            else max(cfg.formation(fid).capacity for fid in self.choices)
        )
        self.n_dwell = cfg.n_stations - 2
        self.length = n_trains * (2 + self.n_dwell)
        # latest last-train departure any plan can reach may sit above the
        # floor; when it cannot, the floor is vacuous (see core)
        self.eq_floor = last_departure_floor(n_trains, bounds, period)

    # -- encoding -----------------------------------------------------------

    def encode(self, plan: TrainPlan) -> np.ndarray:
        if plan.n_trains != self.n_trains:
            raise ValueError("plan train count does not match the problem")
        idx = [self.choices.index(fid) for fid in plan.formations]
        return np.concatenate(
            [np.array(idx, dtype=float), plan.first_departures, plan.dwell_times.ravel()]
        )

    def decode(self, genes: np.ndarray) -> TrainPlan:
        k = self.n_trains
        if len(genes) != self.length:
            raise ValueError(f"chromosome length {len(genes)}, expected {self.length}")
        raw_idx = np.clip(np.rint(genes[:k]).astype(int), 0, len(self.choices) - 1)
        return TrainPlan(
            formations=tuple(self.choices[i] for i in raw_idx),
            first_departures=genes[k : 2 * k].copy(),
            dwell_times=genes[2 * k :].reshape(k, self.n_dwell).copy(),
        )

    # -- generation and repair ----------------------------------------------

    def _departure_window(self, k: int, prev: float) -> Tuple[float, float]:
        """Feasible window for train k's first departure given train k-1's."""
        b, p = self.bounds, self.period
        remain = self.n_trains - 1 - k
        if k == 0:
            lo = max(p.start, self.eq_floor - remain * b.headway_max)
            hi = min(p.start + b.headway_max, p.end - remain * b.headway_min)
        else:
            lo = max(prev + b.headway_min, self.eq_floor - remain * b.headway_max)
            hi = min(prev + b.headway_max, p.end - remain * b.headway_min)
        return lo, max(lo, hi)

    def random_genes(self, rng: np.random.Generator) -> np.ndarray:
        k = self.n_trains
        genes = np.empty(self.length)
        genes[:k] = rng.integers(0, len(self.choices), size=k)
        prev = np.nan
        for t in range(k):
            lo, hi = self._departure_window(t, prev)
            prev = rng.uniform(lo, hi) if hi > lo else lo
            genes[k + t] = prev
        genes[2 * k :] = rng.uniform(
            self.bounds.dwell_min, self.bounds.dwell_max, size=k * self.n_dwell
        )
        return self.repair(genes)

    def repair(self, genes: np.ndarray) -> np.ndarray:
        """Project a chromosome onto the feasible set.

        Sweeps trains in order: the formation index is clipped to the
        choice list, each departure is clamped into the window left by
        its predecessor, and each dwell is clamped so the running dwell
        difference against the previous train keeps every downstream
        headway inside the band. Moving only the later train preserves
        earlier decisions.
        """
        k = self.n_trains
        g = np.array(genes, dtype=float)
        g[:k] = np.clip(np.rint(g[:k]), 0, len(self.choices) - 1)

        first = g[k : 2 * k]
        prev = np.nan
        for t in range(k):
            lo, hi = self._departure_window(t, prev)
            prev = min(max(first[t], lo), hi)
            first[t] = prev

        dwell = g[2 * k :].reshape(k, self.n_dwell)
        b = self.bounds
        np.clip(dwell[0], b.dwell_min, b.dwell_max, out=dwell[0])
        for t in range(1, k):
            gap = first[t] - first[t - 1]
            lo_cum = b.headway_min - gap
            hi_cum = b.headway_max - gap
            s = 0.0
            for c in range(self.n_dwell):
                d_prev = dwell[t - 1, c]
                lo_d = max(b.dwell_min, lo_cum - s + d_prev)
                hi_d = min(b.dwell_max, hi_cum - s + d_prev)
                d = min(max(dwell[t, c], lo_d), hi_d)
                s += d - d_prev
                dwell[t, c] = d
        return g

    def feasible(self, genes: np.ndarray) -> bool:
        return validate_plan(self.decode(genes), self.cfg, self.bounds, self.period).ok

    # -- variation ----------------------------------------------------------

    def mutate_position(self, genes: np.ndarray, pos: int, rng: np.random.Generator) -> np.ndarray:
        g = genes.copy()
        k = self.n_trains
        if pos < k:
            g[pos] = rng.integers(0, len(self.choices))
        elif pos < 2 * k:
            step = self.bounds.headway_max - self.bounds.headway_min
            g[pos] += rng.uniform(-step, step)
        else:
            step = self.bounds.dwell_max - self.bounds.dwell_min
            g[pos] += rng.uniform(-step, step)
        return g

    # -- objective ----------------------------------------------------------

    def evaluate(self, genes: np.ndarray):
        """(slack capacity, third-train-wait violation, FlowResult)."""
        plan = self.decode(genes)
        dep = propagate_timetable(plan, self.cfg)
        fr = simulate_loading(dep, plan.formations, self.cfg, self.dm)
        return spare_capacity_objective(fr), two_train_violation(fr), fr

    def fitness(self, genes: np.ndarray) -> float:
        z1, violation, _ = self.evaluate(genes)
        return 1.0 / (z1 + self.penalty * violation + FITNESS_EPS)


@dataclass
class Stage1Result:
    plan: TrainPlan
    z1: float
    violation: float
    evolution: EvolutionResult


def optimize_formation_and_timetable(
    cfg: LineConfig,
    dm: DemandModel,
    bounds: OperationBounds,
    period: StudyPeriod,
    ga_params: GAParams,
    n_trains: int,
    formation_choices: Optional[Sequence[int]] = None,
) -> Stage1Result:
    """Run the first-stage GA and return the best decoded plan."""
    problem = FormationTimetableProblem(
        cfg, dm, bounds, period, n_trains, formation_choices=formation_choices
    )
    result = evolve(problem, ga_params)
    z1, violation, _ = problem.evaluate(result.best.genes)
    return Stage1Result(
        plan=problem.decode(result.best.genes),
        z1=z1,
        violation=violation,
        evolution=result,
    )
