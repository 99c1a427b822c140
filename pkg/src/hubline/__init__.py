"""hubline: simulation and two-stage optimization of a hub-connected
transit line (train formations + timetable, then per-station holding
control) under pulsed, randomly delayed feeder demand."""

__version__ = "0.1.0"

from .core import (
    FlowResult,
    FormationType,
    HoldingPlan,
    InternalInvariantError,
    LineConfig,
    OperationBounds,
    StudyPeriod,
    TrainPlan,
    ValidationReport,
    Violation,
    validate_line,
    validate_plan,
)
from .demand import (
    DelayScenario,
    DemandModel,
    OuterArrival,
    apply_delay_scenario,
    assemble_demand_model,
    build_demand_model,
    sample_delay_scenario,
    synthetic_demand_inputs,
)
from .ga import EvolutionResult, GAParams, Individual, evolve, roulette_select, single_point_crossover
from .simulator import (
    propagate_timetable,
    simulate_loading,
    spare_capacity_objective,
    two_train_violation,
    waiting_time_objective,
)
from .formation_opt import (
    ConfigurationError,
    FormationTimetableProblem,
    optimize_formation_and_timetable,
)
from .holding_opt import HoldingProblem, optimize_holding, random_holding_genes
from .metrics import BinMetrics, compute_bin_metrics, travel_times
from .experiment import (
    ExperimentInputs,
    ExperimentReport,
    FixedHeadways,
    StrategySpec,
    emit_report,
    run_experiment,
    run_strategy,
    standard_strategies,
)
from .microsim import PassengerEvent, discretize_demand, micro_simulate
