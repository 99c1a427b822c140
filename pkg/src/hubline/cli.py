"""Command-line entry point.

Subcommands:

    optimize        run stage 1 (formations/timetable), stage 2 (holding),
                    or both, writing plan/holding JSON and GA traces
    simulate        evaluate a given plan (optionally with holding and a
                    delay scenario) and export the per-cell flow
    compare         the six-case strategy comparison with CSV reports
    sample-scenario draw a reproducible feeder-delay scenario

Exit codes: 0 success, 1 I/O error, 2 infeasible or invalid
configuration, 3 internal invariant failure.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .core import (
    InternalInvariantError,
    holding_from_json,
    holding_to_json,
    plan_from_json,
    plan_to_json,
)
from .config import load_config
from .demand import DelayScenario, sample_delay_scenario
from .experiment import child_seed, emit_report, run_experiment, standard_strategies
from .formation_opt import ConfigurationError, optimize_formation_and_timetable
from .holding_opt import optimize_holding
from .metrics import travel_times
from .simulator import (
    flow_to_csv,
    propagate_timetable,
    residual_left_behind,
    simulate_loading,
    spare_capacity_objective,
    two_train_violation,
    waiting_time_objective,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hubline",
        description="Transit-line formation/timetable optimization and holding control",
    )
    parser.add_argument("--version", action="version", version=f"hubline {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default="results"):
        p.add_argument("--config", required=True, help="config JSON path or bundled name (beijing9.json)")
        p.add_argument("--seed", type=int, default=1, help="base random seed")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--population", type=int, help="override GA population size")
        p.add_argument("--generations", type=int, help="override GA generation count")

    p = sub.add_parser("optimize", help="run the optimization stages")
    common(p)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--stage1", action="store_true", help="formations and timetable only")
    mode.add_argument("--stage2", action="store_true", help="holding control only (needs --plan)")
    mode.add_argument("--full", action="store_true", help="both stages (default)")
    p.add_argument("--plan", help="existing plan JSON (input for --stage2)")
    p.add_argument("--scenario", help="delay scenario JSON applied to the holding stage's demand")

    p = sub.add_parser("simulate", help="evaluate a plan against the configured demand")
    p.add_argument("--config", required=True)
    p.add_argument("--plan", required=True, help="plan JSON")
    p.add_argument("--holding", help="holding JSON")
    p.add_argument("--scenario", help="delay scenario JSON")
    p.add_argument("--out", default="results")

    p = sub.add_parser("compare", help="run the six-case strategy comparison")
    common(p, out_default="results")
    p.add_argument("--seeds", type=int, default=5, help="number of replication seeds")
    p.add_argument("--warmup", type=float, default=20.0, help="minutes excluded from metrics")

    p = sub.add_parser("sample-scenario", help="draw a reproducible delay scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n-delayed", type=int, help="override the configured count")
    p.add_argument("--out", help="write JSON here instead of stdout")
    return parser


def _ga_params(rc, args, seed):
    ga = rc.ga
    return type(ga)(
        population_size=args.population or ga.population_size,
        generations=args.generations or ga.generations,
        crossover_prob=ga.crossover_prob,
        mutation_prob=ga.mutation_prob,
        seed=seed,
    )


def _load_scenario(path) -> DelayScenario:
    with open(path) as fh:
        return DelayScenario.from_json(fh.read())


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _cmd_optimize(args) -> int:
    rc = load_config(args.config)
    inputs = rc.experiment_inputs()
    os.makedirs(args.out, exist_ok=True)
    stage1 = args.stage1 or args.full or not (args.stage1 or args.stage2)
    stage2 = args.stage2 or args.full or not (args.stage1 or args.stage2)

    plan = None
    if stage1:
        res = optimize_formation_and_timetable(
            rc.cfg, inputs.scheduled_dm, rc.bounds, rc.period,
            _ga_params(rc, args, child_seed(args.seed, "stage1")),
            rc.n_trains, formation_choices=rc.formation_choices,
        )
        plan = res.plan
        _write(os.path.join(args.out, "plan.json"), plan_to_json(plan))
        res.evolution.history_to_csv(os.path.join(args.out, "stage1_trace.csv"))
        print(f"stage 1: slack capacity {res.z1:.1f}, third-train-wait violation {res.violation:.1f}")
    if stage2:
        if plan is None:
            if not args.plan:
                raise ConfigurationError("--stage2 needs --plan (or run --full)")
            with open(args.plan) as fh:
                plan = plan_from_json(fh.read())
        scenario = _load_scenario(args.scenario) if args.scenario else DelayScenario({})
        dm = inputs.realized_dm(scenario)
        res2 = optimize_holding(
            plan, rc.cfg, dm, rc.bounds, rc.period,
            _ga_params(rc, args, child_seed(args.seed, "stage2")),
        )
        _write(os.path.join(args.out, "holding.json"), holding_to_json(res2.holding))
        res2.evolution.history_to_csv(os.path.join(args.out, "stage2_trace.csv"))
        dep = propagate_timetable(plan, rc.cfg, res2.holding)
        _timetable_csv(os.path.join(args.out, "effective_timetable.csv"), dep, rc.cfg.station_names)
        print(
            f"stage 2: total wait {res2.z2:.1f} pax-min "
            f"(no control: {res2.zero_holding_z2:.1f})"
        )
    print(f"outputs in {args.out}")
    return 0


def _timetable_csv(path, dep, names):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["train"] + list(names))
        for k in range(dep.shape[0]):
            w.writerow([k + 1] + [f"{t:.4f}" for t in dep[k]])


def _cmd_simulate(args) -> int:
    rc = load_config(args.config)
    inputs = rc.experiment_inputs()
    with open(args.plan) as fh:
        plan = plan_from_json(fh.read())
    holding = None
    if args.holding:
        with open(args.holding) as fh:
            holding = holding_from_json(fh.read())
    scenario = _load_scenario(args.scenario) if args.scenario else DelayScenario({})
    dm = inputs.realized_dm(scenario)
    dep = propagate_timetable(plan, rc.cfg, holding, rc.bounds)
    fr = simulate_loading(dep, plan.formations, rc.cfg, dm)
    z2, t1, t2 = waiting_time_objective(fr, dm)
    os.makedirs(args.out, exist_ok=True)
    flow_to_csv(fr, os.path.join(args.out, "flow.csv"), rc.cfg.station_names)
    summary = {
        "slack_capacity": spare_capacity_objective(fr),
        "total_wait": z2,
        "first_train_wait": t1,
        "extra_wait": t2,
        "third_train_violation": two_train_violation(fr),
        "residual_left_behind": residual_left_behind(fr),
        "mean_travel_time": float(travel_times(fr).mean()),
    }
    _write(os.path.join(args.out, "objectives.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_compare(args) -> int:
    rc = load_config(args.config)
    inputs = rc.experiment_inputs()
    if args.population or args.generations:
        inputs.ga = _ga_params(rc, args, None)
    specs = standard_strategies(rc.baseline_formation, rc.fixed_headways)
    seeds = [args.seed + i for i in range(args.seeds)]
    report = run_experiment(specs, inputs, seeds, warmup=args.warmup)
    files = emit_report(report, args.out, config_digest=rc.digest)
    for agg in report.aggregates:
        imp = f"  improvement {agg.improvement * 100:6.2f}%" if agg.improvement is not None else ""
        print(
            f"{agg.label:5s} avg wait {agg.mean['avg_wait']:.3f} min "
            f"(std {agg.mean['wait_std']:.3f}){imp}"
        )
    print("wrote: " + ", ".join(os.path.basename(f) for f in files))
    return 0


def _cmd_sample_scenario(args) -> int:
    rc = load_config(args.config)
    n = args.n_delayed if args.n_delayed is not None else rc.n_delayed
    scenario = sample_delay_scenario(rc.outer, n, args.seed, rc.max_delay)
    text = scenario.to_json() + "\n"
    if args.out:
        _write(args.out, text)
        print(f"scenario written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "optimize": _cmd_optimize,
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "sample-scenario": _cmd_sample_scenario,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except InternalInvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
