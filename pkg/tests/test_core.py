import numpy as np
import pytest

from hubline.core import (
    FormationType,
    LineConfig,
    OperationBounds,
    StudyPeriod,
    TrainPlan,
    plan_from_json,
    plan_to_json,
    propagate_departures,
    validate_line,
    validate_plan,
)

BEIJING_RUN_TIMES = [1.6, 1.4, 2.7, 2.1, 1.7, 1.9, 2.6, 1.9, 2.3, 1.45, 1.18, 2.0]


def beijing_line():
    return LineConfig(
        station_names=tuple(f"st{i}" for i in range(13)),
        run_times=BEIJING_RUN_TIMES,
        hub_index=4,
        formations=(
            FormationType(4, 4, 960.0),
            FormationType(6, 6, 1440.0),
            FormationType(8, 8, 1920.0),
        ),
    )


class TestStudyPeriod:
    def test_bins(self):
        p = StudyPeriod(450.0, 550.0, 5.0)
        assert p.n_bins == 20
        assert p.duration == 100.0
        assert p.bin_edges()[0] == 450.0 and p.bin_edges()[-1] == 550.0

    def test_rejects_bad_order(self):
        with pytest.raises(ValueError):
            StudyPeriod(10.0, 10.0)

    def test_rejects_nondividing_bin(self):
        with pytest.raises(ValueError):
            StudyPeriod(0.0, 13.0, 5.0)


class TestFormationType:
    def test_from_cars(self):
        f = FormationType.from_cars(6, 6, 240.0)
        assert f.capacity == 1440.0

    def test_rejects_nonpositive_capacity(self):
        with pytest.raises(ValueError):
            FormationType(1, 1, 0.0)


class TestValidateLine:
    def test_thirteen_station_line_valid(self):
        assert validate_line(beijing_line()).ok

    def test_minimal_two_station_line(self):
        cfg = LineConfig(("a", "b"), [1.0], 0, (FormationType(1, 1, 10.0),))
        assert validate_line(cfg).ok

    def test_zero_run_time_reported(self):
        cfg = LineConfig(("a", "b", "c"), [1.0, 0.0], 0, (FormationType(1, 1, 10.0),))
        report = validate_line(cfg)
        assert not report.ok
        assert "non_positive_run_time" in report.codes()

    def test_single_station_reported(self):
        cfg = LineConfig(("a",), [], 0, (FormationType(1, 1, 10.0),))
        assert "too_few_stations" in validate_line(cfg).codes()

    def test_hub_out_of_range(self):
        cfg = LineConfig(("a", "b"), [1.0], 5, (FormationType(1, 1, 10.0),))
        assert "hub_out_of_range" in validate_line(cfg).codes()


def make_plan(first, dwell, n_stations=13, formation=6):
    first = np.asarray(first, dtype=float)
    k = len(first)
    dwell = np.full((k, n_stations - 2), dwell) if np.isscalar(dwell) else dwell
    return TrainPlan((formation,) * k, first, dwell)


class TestValidatePlan:
    def test_paper_scale_uniform_plan_valid(self):
        # 18 trains, uniform 5-minute gaps, equal dwells: headway band holds everywhere
        cfg = beijing_line()
        period = StudyPeriod(450.0, 550.0, 5.0)
        bounds = OperationBounds(4.85, 5.15, 0.5, 0.75)
        plan = make_plan(450.0 + 5.0 * np.arange(18), 0.5)
        assert validate_plan(plan, cfg, bounds, period).ok

    def test_two_train_boundary_of_departure_windows(self):
        cfg = LineConfig(("a", "b", "c"), [1.0, 1.0], 0, (FormationType(6, 6, 10.0),))
        period = StudyPeriod(0.0, 50.0, 5.0)
        bounds = OperationBounds(1.0, 60.0, 0.5, 0.5)
        plan = make_plan([0.0, 50.0], 0.5, n_stations=3)
        assert validate_plan(plan, cfg, bounds, period).ok

    def test_tight_gap_violates_headway_at_every_station(self):
        # equal dwells propagate the 4.0-minute gap unchanged to all stations
        cfg = beijing_line()
        period = StudyPeriod(450.0, 550.0, 5.0)
        bounds = OperationBounds(4.85, 5.15, 0.5, 0.75)
        plan = make_plan([450.0, 454.0], 0.5)
        report = validate_plan(plan, cfg, bounds, period)
        below = [v for v in report.violations if v.code == "headway_below_min"]
        assert len(below) == cfg.n_stations
        assert {v.station for v in below} == set(range(cfg.n_stations))

    def test_unknown_formation_reported(self):
        cfg = beijing_line()
        period = StudyPeriod(450.0, 550.0, 5.0)
        bounds = OperationBounds(4.85, 5.15, 0.5, 0.75)
        plan = make_plan(450.0 + 5.0 * np.arange(18), 0.5, formation=99)
        assert "unknown_formation" in validate_plan(plan, cfg, bounds, period).codes()

    def test_dwell_out_of_bounds_located(self):
        cfg = beijing_line()
        period = StudyPeriod(450.0, 550.0, 5.0)
        bounds = OperationBounds(4.85, 5.15, 0.5, 0.75)
        dwell = np.full((18, 11), 0.5)
        dwell[3, 2] = 0.9
        plan = make_plan(450.0 + 5.0 * np.arange(18), dwell)
        report = validate_plan(plan, cfg, bounds, period)
        bad = [v for v in report.violations if v.code == "dwell_out_of_bounds"]
        assert len(bad) == 1 and bad[0].train == 3 and bad[0].station == 3

    def test_late_departure_floor_vacuous_when_unreachable(self):
        # 18 trains cannot reach end - headway_max under these bounds, so only
        # the hard end-of-period cap applies to the final departure
        cfg = beijing_line()
        period = StudyPeriod(450.0, 550.0, 5.0)
        bounds = OperationBounds(4.85, 5.15, 0.5, 0.75)
        plan = make_plan(450.0 + 4.9 * np.arange(18), 0.5)
        assert plan.first_departures[-1] < period.end - bounds.headway_max
        assert validate_plan(plan, cfg, bounds, period).ok

    def test_late_departure_floor_enforced_when_reachable(self):
        cfg = LineConfig(("a", "b", "c"), [1.0, 1.0], 0, (FormationType(6, 6, 10.0),))
        period = StudyPeriod(0.0, 30.0, 5.0)
        bounds = OperationBounds(5.0, 12.0, 0.5, 0.5)
        plan = make_plan([0.0, 6.0, 12.0], 0.5, n_stations=3)  # ends 18 min early
        report = validate_plan(plan, cfg, bounds, period)
        assert "last_departure_early" in report.codes()

    def test_first_departure_window(self):
        cfg = beijing_line()
        period = StudyPeriod(450.0, 550.0, 5.0)
        bounds = OperationBounds(4.85, 5.15, 0.5, 0.75)
        early = make_plan(449.0 + 5.0 * np.arange(18), 0.5)
        assert "first_departure_early" in validate_plan(early, cfg, bounds, period).codes()
        late = make_plan(456.0 + 5.0 * np.arange(18), 0.5)
        assert "first_departure_late" in validate_plan(late, cfg, bounds, period).codes()

    def test_dimension_mismatch_raises(self):
        cfg = beijing_line()
        period = StudyPeriod(450.0, 550.0, 5.0)
        bounds = OperationBounds(4.85, 5.15, 0.5, 0.75)
        plan = TrainPlan((6, 6), [450.0, 455.0], np.zeros((2, 4)))
        with pytest.raises(ValueError):
            validate_plan(plan, cfg, bounds, period)

    def test_headway_invariance_under_equal_dwells(self):
        # a shared dwell vector leaves every station's headway equal to the
        # first-station gap
        rng = np.random.default_rng(7)
        for _ in range(20):
            k = int(rng.integers(2, 6))
            dwell_row = rng.uniform(0.5, 0.75, 11)
            first = 450.0 + np.cumsum(rng.uniform(4.85, 5.15, k)) - 4.85
            dep = propagate_departures(first, np.tile(dwell_row, (k, 1)), BEIJING_RUN_TIMES)
            gaps = np.diff(dep, axis=0)
            assert np.allclose(gaps, gaps[:, :1])

    def test_validation_is_pure(self):
        cfg = beijing_line()
        period = StudyPeriod(450.0, 550.0, 5.0)
        bounds = OperationBounds(4.85, 5.15, 0.5, 0.75)
        plan = make_plan(450.0 + 5.0 * np.arange(18), 0.6)
        r1 = validate_plan(plan, cfg, bounds, period)
        r2 = validate_plan(plan, cfg, bounds, period)
        assert r1 == r2


class TestPlanSerialization:
    def test_round_trip(self):
        plan = make_plan(450.0 + 5.0 * np.arange(4), 0.6, n_stations=5)
        back = plan_from_json(plan_to_json(plan))
        assert back.formations == plan.formations
        assert np.array_equal(back.first_departures, plan.first_departures)
        assert np.array_equal(back.dwell_times, plan.dwell_times)
