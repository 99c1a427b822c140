"""JSON run-configuration loading.

A configuration document fully describes a case study: the line, the
operating bounds, the study period, the fleet options, the demand
(synthetic or CSV-backed), the baseline strategy settings and the GA
parameters. Station numbers in files are 1-based, as printed on line
diagrams; they are converted to the package's 0-based indices on load.

Schema (see data/beijing9.json for a complete example):

    {
      "period":   {"start": "7:30", "end": "9:10", "bin_minutes": 5},
      "stations": ["...", ...],
      "run_times": [...],                 # N-1 values, minutes
      "hub_station": 5,                   # 1-based position
      "formations": [{"id": 4, "cars": 4, "capacity": 960}, ...],
      "optimize_formations": [4, 8],      # ids the optimizer may choose
      "trains": 18,
      "bounds": {"headway_min": 4.85, "headway_max": 5.15,
                  "dwell_min": 0.5, "dwell_max": 0.75, "hold_max": 1.0},
      "ga": {"population": 50, "generations": 500,
              "crossover_prob": 0.8, "mutation_prob": 0.5},
      "baseline": {"formation": 6, "peak_headway": 4.0,
                    "offpeak_headway": 6.0, "peak_gaps": 9,
                    "scheduled_dwell": 0.625},
      "demand": {"hub_share": 0.6, "pulse_spread": 10.0,
                  either "synthetic": {"seed": ..., "peak_bin_target": ...,
                                        ...generator options}
                  or     "commuter_csv": "path", "outer_csv": "path"},
      "delay": {"n_delayed": 3, "max_delay": 30.0}
    }
"""

import hashlib
import json
import os
from dataclasses import dataclass
from importlib import resources
from typing import List, Optional, Sequence, Tuple

from .core import FormationType, LineConfig, OperationBounds, StudyPeriod, validate_line
from .demand import (
    CommuterTable,
    OuterArrival,
    load_commuter_csv,
    load_outer_csv,
    synthetic_demand_inputs,
)
from .experiment import ExperimentInputs, FixedHeadways
from .formation_opt import ConfigurationError
from .ga import GAParams


def parse_clock(value) -> float:
    """Minutes from midnight; accepts a number or an "H:MM[:SS]" string."""
    if isinstance(value, (int, float)):
        return float(value)
    parts = str(value).strip().split(":")
    if not 2 <= len(parts) <= 3:
        raise ConfigurationError(f"cannot parse clock time {value!r}")
    h, m = int(parts[0]), float(parts[1])
    s = float(parts[2]) if len(parts) == 3 else 0.0
    return h * 60.0 + m + s / 60.0


@dataclass
class RunConfig:
    """A loaded configuration, ready to drive simulations and experiments."""

    cfg: LineConfig
    bounds: OperationBounds
    period: StudyPeriod
    n_trains: int
    ga: GAParams
    formation_choices: Tuple[int, ...]
    base_table: CommuterTable
    outer: List[OuterArrival]
    hub_share: float
    pulse_spread: float
    baseline_formation: int
    fixed_headways: FixedHeadways
    scheduled_dwell: float
    n_delayed: int
    max_delay: float
    digest: str

    def experiment_inputs(self) -> ExperimentInputs:
        return ExperimentInputs(
            cfg=self.cfg,
            bounds=self.bounds,
            period=self.period,
            n_trains=self.n_trains,
            base_table=self.base_table,
            outer=self.outer,
            hub_share=self.hub_share,
            pulse_spread=self.pulse_spread,
            ga=self.ga,
            formation_choices=self.formation_choices,
            scheduled_dwell=self.scheduled_dwell,
            n_delayed=self.n_delayed,
            max_delay=self.max_delay,
        )


def bundled_config_path(name: str = "beijing9.json"):
    return resources.files("hubline").joinpath("data", name)


def resolve_config_path(path_or_name: str) -> str:
    """An existing filesystem path wins; otherwise fall back to a bundled
    config of that name."""
    if os.path.exists(path_or_name):
        return path_or_name
    bundled = bundled_config_path(os.path.basename(path_or_name))
    if bundled.is_file():
        return str(bundled)
    raise FileNotFoundError(f"no config file at {path_or_name!r} and no bundled config of that name")


def load_config(path_or_name: str) -> RunConfig:
    path = resolve_config_path(path_or_name)
    with open(path) as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    digest = hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()

    try:
        p = doc["period"]
        period = StudyPeriod(
            parse_clock(p["start"]), parse_clock(p["end"]), float(p.get("bin_minutes", 5.0))
        )
        formations = tuple(
            FormationType(int(f["id"]), int(f.get("cars", 0)), float(f["capacity"]))
            for f in doc["formations"]
        )
        cfg = LineConfig(
            station_names=tuple(doc["stations"]),
            run_times=doc["run_times"],
            hub_index=int(doc["hub_station"]) - 1,
            formations=formations,
        )
        b = doc["bounds"]
        bounds = OperationBounds(
            headway_min=float(b["headway_min"]),
            headway_max=float(b["headway_max"]),
            dwell_min=float(b["dwell_min"]),
            dwell_max=float(b["dwell_max"]),
            hold_max=float(b.get("hold_max", 0.0)),
        )
        g = doc["ga"]
        ga = GAParams(
            population_size=int(g["population"]),
            generations=int(g["generations"]),
            crossover_prob=float(g["crossover_prob"]),
            mutation_prob=float(g["mutation_prob"]),
        )
        n_trains = int(doc["trains"])
        choices = tuple(int(x) for x in doc.get("optimize_formations", cfg.formation_ids))

        d = doc["demand"]
        hub_share = float(d["hub_share"])
        spread = float(d.get("pulse_spread", 10.0))
        if "synthetic" in d:
            s = dict(d["synthetic"])
            base, outer = synthetic_demand_inputs(
                period,
                cfg.n_stations,
                cfg.hub_index,
                seed=int(s.pop("seed")),
                peak_bin_target=float(s.pop("peak_bin_target")),
                hub_share=hub_share,
                spread=spread,
                **{k: (int(v) if k == "n_pulses" else float(v)) for k, v in s.items()},
            )
        else:
            cfg_dir = os.path.dirname(os.path.abspath(path))
            base = load_commuter_csv(
                os.path.join(cfg_dir, d["commuter_csv"]), period, cfg.n_stations
            )
            outer = load_outer_csv(os.path.join(cfg_dir, d["outer_csv"]), cfg.n_stations)

        bl = doc["baseline"]
        fixed = FixedHeadways(
            peak=float(bl["peak_headway"]),
            offpeak=float(bl["offpeak_headway"]),
            split_after=int(bl["peak_gaps"]),
        )
        delay = doc.get("delay", {})
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"config {path}: {exc}") from exc

    report = validate_line(cfg)
    if not report.ok:
        raise ConfigurationError(f"config {path}: invalid line: {report.summary()}")

    return RunConfig(
        cfg=cfg,
        bounds=bounds,
        period=period,
        n_trains=n_trains,
        ga=ga,
        formation_choices=choices,
        base_table=base,
        outer=list(outer),
        hub_share=hub_share,
        pulse_spread=spread,
        baseline_formation=int(bl["formation"]),
        fixed_headways=fixed,
        scheduled_dwell=float(bl.get("scheduled_dwell", 0.625)),
        n_delayed=int(delay.get("n_delayed", 3)),
        max_delay=float(delay.get("max_delay", 30.0)),
        digest=digest,
    )
