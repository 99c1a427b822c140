"""Second optimization stage: per-station holding adjustments on a fixed
plan, minimizing total passenger waiting time against a (possibly
delay-perturbed) demand realization.

Chromosome: the K x (N-2) holding matrix flattened row-major. The cap
`hold_max` bounds how far a train may run ahead of or behind its
schedule, so feasibility means three things:

* each per-station adjustment satisfies |h| <= hold_max;
* each train's cumulative shift against its scheduled departures stays
  within +-hold_max at every station (otherwise lockstep adjustments
  could drift the whole fleet far off schedule, silently pushing
  late-period arrivals past the last train and out of the objective);
* every composite headway stays inside the allowed band. For timetables
  whose scheduled headways already sit outside the optimization band
  (the fixed peak/off-peak baseline), the band at each cell widens to
  the hull of the scheduled gap and the band, so holding may move a
  headway toward the band but never push it further out.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import HoldingPlan, LineConfig, OperationBounds, StudyPeriod, TrainPlan
from .demand import DemandModel
from .ga import EvolutionResult, GAParams, evolve
from .simulator import (
    propagate_timetable,
    simulate_loading,
    two_train_violation,
    waiting_time_objective,
)

FITNESS_EPS = 1e-9


def random_holding_genes(
    n_trains: int, n_stations: int, hold_max: float, rng: np.random.Generator
) -> np.ndarray:
    """Uniform holding values in [-hold_max, +hold_max] for every train and
    intermediate station."""
    if hold_max < 0:
        raise ValueError("hold_max must be non-negative")
    return rng.uniform(-hold_max, hold_max, size=n_trains * max(n_stations - 2, 0))


class HoldingProblem:
    """GA adapter for the holding stage."""

    def __init__(
        self,
        plan: TrainPlan,
        cfg: LineConfig,
        dm: DemandModel,
        bounds: OperationBounds,
        period: StudyPeriod,
        penalty_weight: Optional[float] = None,
    ):
        self.plan = plan
        self.cfg = cfg
        self.dm = dm
        self.bounds = bounds
        self.period = period
        self.n_trains = plan.n_trains
        self.n_dwell = cfg.n_stations - 2
        self.length = self.n_trains * self.n_dwell
        self.penalty = (
            penalty_weight
            if penalty_weight is not None
            else max(f.capacity for f in cfg.formations)
        )
        self.base_dep = propagate_timetable(plan, cfg)
        base_gaps = np.diff(self.base_dep, axis=0)  # (K-1, N)
        self.gap_lo = np.minimum(bounds.headway_min, base_gaps)
        self.gap_hi = np.maximum(bounds.headway_max, base_gaps)
        self.base_gaps = base_gaps

    def seed_genes(self):
        # the do-nothing chromosome guarantees the optimizer never loses to no control
        return [np.zeros(self.length)]

    def random_genes(self, rng: np.random.Generator) -> np.ndarray:
        return random_holding_genes(self.n_trains, self.cfg.n_stations, self.bounds.hold_max, rng)

    def decode(self, genes: np.ndarray) -> HoldingPlan:
        if len(genes) != self.length:
            raise ValueError(f"chromosome length {len(genes)}, expected {self.length}")
        return HoldingPlan(genes.reshape(self.n_trains, self.n_dwell).copy())

    def repair(self, genes: np.ndarray) -> np.ndarray:
        """Box the genes, then clip them so composite headways stay in the
        per-cell band.

        Trains are processed in order against the already-repaired shift
        profile of their predecessor. For each train the admissible
        cumulative-shift corridor per station is pruned backwards by the
        per-station holding cap before the forward clipping pass; the
        pruned corridor always contains the predecessor's own shift path,
        so the pass cannot dead-end. Departures stay strictly increasing
        in train index at every station."""
        cap = self.bounds.hold_max
        h = np.clip(
            np.array(genes, dtype=float).reshape(self.n_trains, self.n_dwell), -cap, cap
        )
        if self.n_dwell == 0:
            return h.ravel()
        prev = np.zeros(self.n_dwell)  # cumulative shift of train k-1 at stations 1..N-2
        for k in range(self.n_trains):
            if k > 0:
                lo_c = prev + self.gap_lo[k - 1, 1 : self.n_dwell + 1] - self.base_gaps[k - 1, 1 : self.n_dwell + 1]
                hi_c = prev + self.gap_hi[k - 1, 1 : self.n_dwell + 1] - self.base_gaps[k - 1, 1 : self.n_dwell + 1]
                np.clip(lo_c, -cap, None, out=lo_c)  # schedule-deviation envelope
                np.clip(hi_c, None, cap, out=hi_c)
            else:
                lo_c = np.full(self.n_dwell, -cap)
                hi_c = np.full(self.n_dwell, cap)
            for c in range(self.n_dwell - 2, -1, -1):
                lo_c[c] = max(lo_c[c], lo_c[c + 1] - cap)
                hi_c[c] = min(hi_c[c], hi_c[c + 1] + cap)
            s = 0.0
            for c in range(self.n_dwell):
                val = min(max(h[k, c], max(lo_c[c] - s, -cap)), min(hi_c[c] - s, cap))
                s += val
                h[k, c] = val
            prev = np.cumsum(h[k])
        return h.ravel()

    def feasible(self, genes: np.ndarray) -> bool:
        h = genes.reshape(self.n_trains, self.n_dwell)
        if np.any(np.abs(h) > self.bounds.hold_max + 1e-9):
            return False
        if self.n_dwell and np.any(np.abs(np.cumsum(h, axis=1)) > self.bounds.hold_max + 1e-9):
            return False
        dep = propagate_timetable(self.plan, self.cfg, HoldingPlan(h))
        gaps = np.diff(dep, axis=0)
        return bool(
            np.all(gaps >= self.gap_lo - 1e-9) and np.all(gaps <= self.gap_hi + 1e-9)
        )

    def mutate_position(self, genes: np.ndarray, pos: int, rng: np.random.Generator) -> np.ndarray:
        g = genes.copy()
        g[pos] += rng.uniform(-self.bounds.hold_max, self.bounds.hold_max)
        return g

    def evaluate(self, genes: np.ndarray):
        """(total wait, first wait, extra wait, violation, FlowResult)."""
        holding = self.decode(genes)
        dep = propagate_timetable(self.plan, self.cfg, holding)
        fr = simulate_loading(dep, self.plan.formations, self.cfg, self.dm)
        z2, t1, t2 = waiting_time_objective(fr, self.dm)
        return z2, t1, t2, two_train_violation(fr), fr

    def fitness(self, genes: np.ndarray) -> float:
        z2, _, _, violation, _ = self.evaluate(genes)
        return 1.0 / (z2 + self.penalty * violation + FITNESS_EPS)


@dataclass
class Stage2Result:
    holding: HoldingPlan
    z2: float
    t1: float
    t2: float
    zero_holding_z2: float
    evolution: EvolutionResult


def optimize_holding(
    plan: TrainPlan,
    cfg: LineConfig,
    dm: DemandModel,
    bounds: OperationBounds,
    period: StudyPeriod,
    ga_params: GAParams,
) -> Stage2Result:
    """Run the holding GA for a fixed plan against the given demand
    realization. The zero-holding chromosome is part of generation 0, so
    the result is never worse than not controlling at all."""
    problem = HoldingProblem(plan, cfg, dm, bounds, period)
    zero_z2 = problem.evaluate(np.zeros(problem.length))[0]
    result = evolve(problem, ga_params)
    z2, t1, t2, _, _ = problem.evaluate(result.best.genes)
    return Stage2Result(
        holding=problem.decode(result.best.genes),
        z2=z2,
        t1=t1,
        t2=t2,
        zero_holding_z2=zero_z2,
        evolution=result,
    )
