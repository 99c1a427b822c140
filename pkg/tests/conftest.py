import numpy as np
import pytest

from hubline.core import FormationType, LineConfig, OperationBounds, StudyPeriod, TrainPlan
from hubline.demand import DemandModel, build_demand_model


@pytest.fixture
def period():
    return StudyPeriod(0.0, 60.0, 5.0)


@pytest.fixture
def small_line():
    """4 stations, hub at the second one, two sizes of train."""
    return LineConfig(
        station_names=("A", "B", "C", "D"),
        run_times=[2.0, 3.0, 2.0],
        hub_index=1,
        formations=(FormationType(4, 4, 8.0), FormationType(8, 8, 16.0)),
    )


@pytest.fixture
def bounds():
    return OperationBounds(
        headway_min=8.0, headway_max=12.0, dwell_min=0.5, dwell_max=1.5, hold_max=1.0
    )


def constant_demand(period, n_stations, rates):
    """DemandModel with constant per-OD rates given as {(i, j): rate}."""
    base = {od: np.full(period.n_bins, r) for od, r in rates.items()}
    return build_demand_model(base, [], 0.0, 10.0, period, n_stations, 0)


@pytest.fixture
def small_demand(period, small_line):
    return constant_demand(period, 4, {(0, 2): 0.4, (1, 3): 1.0, (2, 3): 0.3})


def uniform_plan(n_trains, n_stations, first_start, gap, dwell):
    first = first_start + gap * np.arange(n_trains)
    return TrainPlan(
        formations=(4,) * n_trains,
        first_departures=first,
        dwell_times=np.full((n_trains, n_stations - 2), dwell),
    )


def random_piecewise_dm(period, n_stations, rng, max_rate=3.0):
    """Random piecewise-constant rates on the period bins for every OD pair."""
    base = {}
    for i in range(n_stations - 1):
        for j in range(i + 1, n_stations):
            if rng.random() < 0.7:
                base[(i, j)] = rng.uniform(0.0, max_rate, period.n_bins)
    return build_demand_model(base, [], 0.0, 10.0, period, n_stations, 0)
