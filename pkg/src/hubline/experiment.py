"""Strategy comparison harness.

Four operating strategies are compared, each with and without feeder
delays where meaningful:

* S1  - fixed formation, fixed peak/off-peak headways, no control;
* S2  - S1's timetable plus optimized holding control;
* S3  - optimized formations/timetable, no control;
* FS  - both optimization stages.

`-N` labels mark runs with delays disabled. Within one replication seed
every strategy faces the same delay realization so the comparison
isolates the strategy itself.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .core import (
    FlowResult,
    HoldingPlan,
    LineConfig,
    OperationBounds,
    StudyPeriod,
    TrainPlan,
)
from .demand import (
    CommuterTable,
    DelayScenario,
    DemandModel,
    OuterArrival,
    apply_delay_scenario,
    assemble_demand_model,
    sample_delay_scenario,
    scale_commuter_hub_rows,
)
from .formation_opt import ConfigurationError, optimize_formation_and_timetable
from .ga import GAParams
from .holding_opt import optimize_holding
from .metrics import BinMetrics, compute_bin_metrics, left_behind_matrix, travel_times
from .simulator import (
    propagate_timetable,
    residual_left_behind,
    simulate_loading,
    spare_capacity_objective,
    two_train_violation,
    waiting_time_objective,
)


@dataclass(frozen=True)
class FixedHeadways:
    """Scheduled headway rule: the first `split_after` gaps use the peak
    headway, the rest the off-peak one."""

    peak: float
    offpeak: float
    split_after: int


@dataclass(frozen=True)
class StrategySpec:
    name: str  # one of S1, S2, S3, FS
    delay_enabled: bool = True
    fixed_formation: Optional[int] = None
    fixed_headways: Optional[FixedHeadways] = None

    def __post_init__(self):
        if self.name not in ("S1", "S2", "S3", "FS"):
            raise ValueError(f"unknown strategy {self.name}")
        fixed = self.name in ("S1", "S2")
        if fixed and (self.fixed_formation is None or self.fixed_headways is None):
            raise ValueError(f"{self.name} needs fixed_formation and fixed_headways")
        if not fixed and (self.fixed_formation is not None or self.fixed_headways is not None):
            raise ValueError(f"{self.name} optimizes its plan; fixed settings are not allowed")

    @property
    def uses_holding(self) -> bool:
        return self.name in ("S2", "FS")

    @property
    def optimizes_plan(self) -> bool:
        return self.name in ("S3", "FS")

    @property
    def label(self) -> str:
        return self.name if self.delay_enabled else f"{self.name}-N"


def standard_strategies(fixed_formation: int, fixed_headways: FixedHeadways) -> List[StrategySpec]:
    """The six comparison cases: no-delay S1/FS plus all four under delays."""
    return [
        StrategySpec("S1", False, fixed_formation, fixed_headways),
        StrategySpec("FS", False),
        StrategySpec("S1", True, fixed_formation, fixed_headways),
        StrategySpec("S2", True, fixed_formation, fixed_headways),
        StrategySpec("S3", True),
        StrategySpec("FS", True),
    ]


@dataclass
class ExperimentInputs:
    """Everything a strategy run needs besides its seed."""

    cfg: LineConfig
    bounds: OperationBounds
    period: StudyPeriod
    n_trains: int
    base_table: CommuterTable
    outer: Sequence[OuterArrival]
    hub_share: float
    pulse_spread: float
    ga: GAParams  # seed field is ignored; per-run seeds are derived
    formation_choices: Sequence[int]
    scheduled_dwell: float
    n_delayed: int
    max_delay: float = 30.0

    @cached_property
    def calibrated_base(self) -> CommuterTable:
        return scale_commuter_hub_rows(
            self.base_table, self.outer, self.hub_share, self.pulse_spread,
            self.period, self.cfg.hub_index,
        )

    @cached_property
    def scheduled_dm(self) -> DemandModel:
        return assemble_demand_model(
            self.calibrated_base, self.outer, self.pulse_spread,
            self.period, self.cfg.n_stations, self.cfg.hub_index,
        )

    def realized_dm(self, scenario: DelayScenario) -> DemandModel:
        if not scenario.shifts:
            return self.scheduled_dm
        shifted = apply_delay_scenario(self.outer, scenario)
        return assemble_demand_model(
            self.calibrated_base, shifted, self.pulse_spread,
            self.period, self.cfg.n_stations, self.cfg.hub_index,
        )

    def ga_params(self, seed: int) -> GAParams:
        return GAParams(
            population_size=self.ga.population_size,
            generations=self.ga.generations,
            crossover_prob=self.ga.crossover_prob,
            mutation_prob=self.ga.mutation_prob,
            seed=seed,
        )


def child_seed(*parts) -> int:
    """Stable derived seed from a replication seed and string/int tags."""
    entropy = []
    for p in parts:
        if isinstance(p, str):
            entropy.append(int.from_bytes(hashlib.sha256(p.encode()).digest()[:4], "big"))
        else:
            entropy.append(int(p))
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def build_fixed_plan(spec: StrategySpec, inputs: ExperimentInputs) -> TrainPlan:
    """Baseline timetable: fixed formation, scheduled headway rule, and the
    scheduled dwell at every intermediate station."""
    fh = spec.fixed_headways
    k = inputs.n_trains
    gaps = np.array(
        [fh.peak if g < fh.split_after else fh.offpeak for g in range(k - 1)]
    )
    first = inputs.period.start + np.concatenate([[0.0], np.cumsum(gaps)])
    if first[-1] > inputs.period.end + 1e-9:
        raise ConfigurationError(
            f"fixed headways place the last departure {first[-1]:.2f} past the period end"
        )
    dwell = np.full((k, inputs.cfg.n_stations - 2), inputs.scheduled_dwell)
    return TrainPlan((spec.fixed_formation,) * k, first, dwell)


@dataclass
class StrategyRun:
    """One (strategy, seed) cell of the experiment."""

    label: str
    seed: int
    scenario: DelayScenario
    plan: TrainPlan
    holding: Optional[HoldingPlan]
    flow: FlowResult = field(repr=False)
    z1: float
    z2: float
    t1: float
    t2: float
    violation: float
    residual: float
    zero_holding_z2: Optional[float]
    line_bins: BinMetrics = field(repr=False)
    hub_bins: BinMetrics = field(repr=False)
    travel: np.ndarray = field(repr=False)
    left_post_warmup: np.ndarray = field(repr=False)
    stage1_history: Optional[np.ndarray] = field(repr=False, default=None)
    stage2_history: Optional[np.ndarray] = field(repr=False, default=None)

    @property
    def left_total(self) -> float:
        return float(self.left_post_warmup.sum())


def run_strategy(
    inputs: ExperimentInputs, spec: StrategySpec, seed: int, warmup: float
) -> StrategyRun:
    """Build the strategy's plan(s) for one replication seed and evaluate it
    against the realized demand."""
    if spec.delay_enabled and inputs.n_delayed > 0:
        scenario = sample_delay_scenario(
            inputs.outer, inputs.n_delayed, child_seed(seed, "scenario"), inputs.max_delay
        )
    else:
        scenario = DelayScenario({})
    dm_eval = inputs.realized_dm(scenario)

    stage1_history = None
    if spec.optimizes_plan:
        # the plan stage sees only scheduled demand, so its seed is shared by
        # every optimizing strategy in this replication: FS evaluates holding
        # on top of the same plan S3 runs bare
        s1res = optimize_formation_and_timetable(
            inputs.cfg, inputs.scheduled_dm, inputs.bounds, inputs.period,
            inputs.ga_params(child_seed(seed, "stage1")),
            inputs.n_trains, formation_choices=inputs.formation_choices,
        )
        plan = s1res.plan
        stage1_history = s1res.evolution.history
    else:
        plan = build_fixed_plan(spec, inputs)

    holding = None
    zero_z2 = None
    stage2_history = None
    if spec.uses_holding:
        s2res = optimize_holding(
            plan, inputs.cfg, dm_eval, inputs.bounds, inputs.period,
            inputs.ga_params(child_seed(seed, spec.label, "stage2")),
        )
        holding = s2res.holding
        zero_z2 = s2res.zero_holding_z2
        stage2_history = s2res.evolution.history

    dep = propagate_timetable(plan, inputs.cfg, holding)
    fr = simulate_loading(dep, plan.formations, inputs.cfg, dm_eval)
    z2, t1, t2 = waiting_time_objective(fr, dm_eval)
    warm_start = inputs.period.start + warmup
    return StrategyRun(
        label=spec.label,
        seed=seed,
        scenario=scenario,
        plan=plan,
        holding=holding,
        flow=fr,
        z1=spare_capacity_objective(fr),
        z2=z2,
        t1=t1,
        t2=t2,
        violation=two_train_violation(fr),
        residual=residual_left_behind(fr),
        zero_holding_z2=zero_z2,
        line_bins=compute_bin_metrics(fr, dm_eval, inputs.period, warmup),
        hub_bins=compute_bin_metrics(fr, dm_eval, inputs.period, warmup, stations=[inputs.cfg.hub_index]),
        travel=travel_times(fr),
        left_post_warmup=left_behind_matrix(fr, warm_start),
        stage1_history=stage1_history,
        stage2_history=stage2_history,
    )


_METRIC_FIELDS = (
    "z1", "z2", "t1", "t2", "violation", "residual",
    "avg_wait", "wait_std", "overall_avg_wait",
    "travel_mean", "travel_std", "left_total", "unserved",
)


def _run_metrics(run: StrategyRun) -> Dict[str, float]:
    return {
        "z1": run.z1,
        "z2": run.z2,
        "t1": run.t1,
        "t2": run.t2,
        "violation": run.violation,
        "residual": run.residual,
        "avg_wait": run.line_bins.mean_avg_wait,
        "wait_std": run.line_bins.std_avg_wait,
        "overall_avg_wait": run.line_bins.overall_avg_wait,
        "travel_mean": float(run.travel.mean()),
        "travel_std": float(run.travel.std(ddof=0)),
        "left_total": run.left_total,
        "unserved": run.line_bins.unserved_total,
    }


@dataclass
class StrategyAggregate:
    label: str
    n_seeds: int
    mean: Dict[str, float]
    std: Dict[str, float]
    improvement: Optional[float] = None  # vs the family baseline's avg_wait
    baseline: Optional[str] = None


@dataclass
class ExperimentReport:
    runs: List[StrategyRun]
    aggregates: List[StrategyAggregate]
    seeds: List[int]
    warmup: float

    def aggregate(self, label: str) -> StrategyAggregate:
        for a in self.aggregates:
            if a.label == label:
                return a
        raise KeyError(f"no strategy labelled {label}")

    def runs_for(self, label: str) -> List[StrategyRun]:
        return [r for r in self.runs if r.label == label]


def run_experiment(
    specs: Sequence[StrategySpec],
    inputs: ExperimentInputs,
    seeds: Sequence[int],
    warmup: float = 20.0,
) -> ExperimentReport:
    """Run every (strategy, seed) cell, aggregate across seeds, and attach
    waiting-time improvements relative to the family baseline (S1 for
    delayed runs, S1-N for no-delay runs)."""
    if warmup >= inputs.period.duration:
        raise ConfigurationError("warmup must be shorter than the study period")
    runs: List[StrategyRun] = []
    for spec in specs:
        for seed in seeds:
            runs.append(run_strategy(inputs, spec, int(seed), warmup))

    aggregates: List[StrategyAggregate] = []
    for spec in specs:
        cell = [r for r in runs if r.label == spec.label]
        per_metric = {f: np.array([_run_metrics(r)[f] for r in cell]) for f in _METRIC_FIELDS}
        aggregates.append(
            StrategyAggregate(
                label=spec.label,
                n_seeds=len(cell),
                mean={f: float(v.mean()) for f, v in per_metric.items()},
                std={f: float(v.std(ddof=0)) for f, v in per_metric.items()},
            )
        )

    by_label = {a.label: a for a in aggregates}
    for agg in aggregates:
        base_label = "S1" if not agg.label.endswith("-N") else "S1-N"
        base = by_label.get(base_label)
        if base is not None and base.mean["avg_wait"] > 0:
            agg.baseline = base_label
            agg.improvement = (base.mean["avg_wait"] - agg.mean["avg_wait"]) / base.mean["avg_wait"]
    return ExperimentReport(runs=runs, aggregates=aggregates, seeds=[int(s) for s in seeds], warmup=warmup)


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def _header_line(seeds: Sequence[int]) -> str:
    return f"# hubline {__version__}; seeds: {','.join(str(s) for s in seeds)}\n"


def emit_report(report: ExperimentReport, outdir, config_digest: str = "") -> List[str]:
    """Write the comparison CSVs plus a reproducibility manifest.

    Files: summary.csv (per-strategy aggregates), bins.csv (per-bin demand,
    supply and waits, line-wide and hub-only), left_behind.csv (per-cell
    post-warmup left-behind), travel_times.csv (per-train trip times), and
    manifest.json. Reruns from identical inputs produce identical bytes.
    """
    os.makedirs(outdir, exist_ok=True)
    written = []

    path = os.path.join(outdir, "summary.csv")
    with open(path, "w", newline="") as fh:
        fh.write(_header_line(report.seeds))
        cols = ["strategy", "statistic", *(f for f in _METRIC_FIELDS), "improvement_vs_baseline", "baseline"]
        fh.write(",".join(cols) + "\n")
        for agg in report.aggregates:
            for stat, values in (("mean", agg.mean), ("std", agg.std)):
                row = [agg.label, stat]
                row += [f"{values[f]:.4f}" for f in _METRIC_FIELDS]
                if stat == "mean" and agg.improvement is not None:
                    row += [f"{agg.improvement:.4f}", agg.baseline]
                else:
                    row += ["", ""]
                fh.write(",".join(row) + "\n")
    written.append(path)

    path = os.path.join(outdir, "bins.csv")
    with open(path, "w", newline="") as fh:
        fh.write(_header_line(report.seeds))
        fh.write("strategy,seed,scope,bin_start,demand,boarded,avg_wait,served,unserved\n")
        for run in report.runs:
            for scope, bm in (("line", run.line_bins), ("hub", run.hub_bins)):
                for b in range(len(bm.bin_start)):
                    fh.write(
                        f"{run.label},{run.seed},{scope},{bm.bin_start[b]:.2f},"
                        f"{bm.demand[b]:.2f},{bm.boarded[b]:.2f},{bm.avg_wait[b]:.4f},"
                        f"{bm.wait_mass[b]:.2f},{bm.unserved[b]:.2f}\n"
                    )
    written.append(path)

    path = os.path.join(outdir, "left_behind.csv")
    with open(path, "w", newline="") as fh:
        fh.write(_header_line(report.seeds))
        fh.write("strategy,seed,train,station,left_behind\n")
        for run in report.runs:
            mat = run.left_post_warmup
            for k in range(mat.shape[0]):
                for i in range(mat.shape[1]):
                    if mat[k, i] > 0:
                        fh.write(f"{run.label},{run.seed},{k + 1},{i + 1},{mat[k, i]:.2f}\n")
    written.append(path)

    path = os.path.join(outdir, "travel_times.csv")
    with open(path, "w", newline="") as fh:
        fh.write(_header_line(report.seeds))
        fh.write("strategy,seed,train,travel_time\n")
        for run in report.runs:
            for k, t in enumerate(run.travel):
                fh.write(f"{run.label},{run.seed},{k + 1},{t:.4f}\n")
    written.append(path)

    path = os.path.join(outdir, "manifest.json")
    manifest = {
        "tool": "hubline",
        "version": __version__,
        "config_digest": config_digest,
        "seeds": report.seeds,
        "warmup": report.warmup,
        "strategies": [a.label for a in report.aggregates],
        "files": [os.path.basename(p) for p in written],
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(path)
    return written
