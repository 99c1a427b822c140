import numpy as np
import pytest

from hubline.core import FormationType, LineConfig, StudyPeriod
from hubline.demand import build_demand_model
from hubline.microsim import PassengerEvent, discretize_demand, micro_simulate
from hubline.simulator import simulate_loading, waiting_time_objective


class TestMicroSimulate:
    def test_single_passenger_boards(self):
        dep = np.array([[10.0, 12.0]])
        events = [PassengerEvent(4.0, 0, 1)]
        res = micro_simulate(dep, [5.0], 2, events, t_start=0.0)
        assert res.boarded[0, 0] == 1.0
        assert res.first_wait_total == pytest.approx(6.0)
        assert res.extra_wait_total == 0.0
        assert res.records[0].boarded_train == 0

    def test_fcfs_order_under_capacity(self):
        dep = np.array([[10.0, 12.0], [20.0, 22.0]])
        events = [PassengerEvent(2.0, 0, 1), PassengerEvent(5.0, 0, 1)]
        res = micro_simulate(dep, [1.0, 1.0], 2, events, t_start=0.0)
        first = [r for r in res.records if r.arrival_time == 2.0][0]
        second = [r for r in res.records if r.arrival_time == 5.0][0]
        assert first.boarded_train == 0
        assert second.boarded_train == 1
        assert second.first_wait == pytest.approx(5.0)  # until train 0 leaves
        assert second.extra_wait == pytest.approx(10.0)  # headway to train 1

    def test_hand_worked_two_train_three_station_case(self):
        # capacity 2; five passengers; worked by hand:
        #  p1 (t=1, a->c) boards train 0, waits 4
        #  p2 (t=2, a->b) boards train 0, waits 3
        #  p3 (t=3, a->b) left by train 0 (full), boards train 1: wait 2 + 10
        #  p4 (t=6, b->c) boards train 0 at b (p2 alighted frees a seat): wait 2
        #  p5 (t=16, b->c) boards train 1 at b: wait 2
        dep = np.array([[5.0, 8.0, 10.0], [15.0, 18.0, 20.0]])
        events = [
            PassengerEvent(1.0, 0, 2),
            PassengerEvent(2.0, 0, 1),
            PassengerEvent(3.0, 0, 1),
            PassengerEvent(6.0, 1, 2),
            PassengerEvent(16.0, 1, 2),
        ]
        res = micro_simulate(dep, [2.0, 2.0], 3, events, t_start=0.0)
        assert res.boarded[0, 0] == 2.0
        assert res.left_behind[0, 0] == 1.0
        assert res.alighted[0, 1] == 1.0
        assert res.boarded[0, 1] == 1.0
        assert res.boarded[1, 0] == 1.0
        assert res.boarded[1, 1] == 1.0
        assert res.first_wait_total == pytest.approx(4 + 3 + 2 + 2 + 2)
        assert res.extra_wait_total == pytest.approx(10.0)

    def test_fractional_event_split_at_capacity(self):
        dep = np.array([[10.0, 12.0], [20.0, 22.0]])
        events = [PassengerEvent(1.0, 0, 1, weight=3.0)]
        res = micro_simulate(dep, [2.0, 2.0], 2, events, t_start=0.0)
        assert res.boarded[0, 0] == pytest.approx(2.0)
        assert res.left_behind[0, 0] == pytest.approx(1.0)
        assert res.boarded[1, 0] == pytest.approx(1.0)
        # 3 pax wait 9 to the first train; 1 waits an extra headway
        assert res.first_wait_total == pytest.approx(27.0)
        assert res.extra_wait_total == pytest.approx(10.0)

    def test_stranded_waits_accrue_to_last_train(self):
        dep = np.array([[10.0, 12.0]])
        events = [PassengerEvent(2.0, 0, 1, weight=4.0)]
        res = micro_simulate(dep, [1.0], 2, events, t_start=0.0)
        assert res.left_behind[0, 0] == pytest.approx(3.0)
        stranded = [r for r in res.records if r.boarded_train is None]
        assert len(stranded) == 1 and stranded[0].weight == pytest.approx(3.0)
        assert res.first_wait_total == pytest.approx(4 * 8.0)
        assert res.extra_wait_total == pytest.approx(0.0)  # no later train existed


class TestDiscretization:
    def test_segment_totals_exact(self, period):
        rng = np.random.default_rng(8)
        base = {(0, 1): rng.uniform(0, 3, period.n_bins)}
        dm = build_demand_model(base, [], 0.0, 1.0, period, 2, 0)
        events = discretize_demand(dm)
        assert sum(e.weight for e in events) == pytest.approx(dm.total_demand(), abs=1e-9)

    def test_split_times_make_window_mass_exact(self, period):
        rng = np.random.default_rng(9)
        base = {(0, 1): rng.uniform(0.3, 3, period.n_bins)}
        dm = build_demand_model(base, [], 0.0, 1.0, period, 2, 0)
        cuts = np.array([[7.3, 9.0], [19.7, 21.0], [44.1, 45.5]])
        events = discretize_demand(dm, split_times=cuts)
        for lo, hi in [(0.0, 7.3), (7.3, 19.7), (19.7, 44.1), (44.1, 60.0)]:
            mass = sum(e.weight for e in events if lo < e.time <= hi)
            assert mass == pytest.approx(dm.interval_demand(0, 1, lo, hi), abs=1e-9)

    def test_first_wait_midpoint_exactness(self, period):
        # events at segment midpoints reproduce the waiting integral exactly
        dm = build_demand_model({(0, 1): np.full(period.n_bins, 2.0)}, [], 0.0, 1.0, period, 2, 0)
        dep = np.array([[30.0, 31.0]])
        events = discretize_demand(dm, split_times=dep)
        res = micro_simulate(dep, [1e9], 2, events, t_start=0.0)
        assert res.first_wait_total == pytest.approx(
            dm.first_wait_integral(0, 1, 0.0, 30.0), abs=1e-9
        )


def random_homogeneous_instance(rng):
    """Random small instance whose origins each feed one destination, so FCFS
    equals the proportional-split rule exactly."""
    n = int(rng.integers(3, 6))
    k = int(rng.integers(2, 7))
    period = StudyPeriod(0.0, 60.0, 5.0)
    cfg = LineConfig(
        tuple(f"s{i}" for i in range(n)),
        rng.uniform(1.0, 2.5, n - 1),
        0,
        (FormationType(1, 1, float(rng.integers(2, 15))),),
    )
    base = {}
    for i in range(n - 1):
        j = int(rng.integers(i + 1, n))
        # integer-mass pulses on whole-minute lattices
        rates = np.zeros(period.n_bins)
        for _ in range(int(rng.integers(1, 4))):
            rates[int(rng.integers(0, period.n_bins))] += float(rng.integers(1, 5))
        base[(i, j)] = rates / 5.0 * 5.0  # pax/min so each bin holds integer*5... keep integer mass
    dm = build_demand_model(base, [], 0.0, 10.0, period, n, 0)
    first = np.sort(rng.uniform(5.0, 45.0, k))
    dwell = rng.uniform(0.4, 1.2, (k, n - 2))
    from hubline.core import TrainPlan
    from hubline.simulator import propagate_timetable

    plan = TrainPlan((1,) * k, first, dwell)
    dep = propagate_timetable(plan, cfg)
    return cfg, dm, dep, plan


@pytest.mark.parametrize("seed", range(10))
def test_aggregate_matches_micro_on_homogeneous_instances(seed):
    rng = np.random.default_rng(100 + seed)
    cfg, dm, dep, plan = random_homogeneous_instance(rng)
    fr = simulate_loading(dep, plan.formations, cfg, dm)
    z2, t1, t2 = waiting_time_objective(fr, dm)
    events = discretize_demand(dm, split_times=dep)
    res = micro_simulate(dep, fr.capacities, cfg.n_stations, events, dm.period.start)
    assert np.allclose(res.boarded, fr.boarded, atol=1e-6)
    assert np.allclose(res.left_behind, fr.left_behind, atol=1e-6)
    assert np.allclose(res.onboard, fr.onboard, atol=1e-6)
    assert np.allclose(res.alighted, fr.alighted, atol=1e-6)
    assert res.first_wait_total == pytest.approx(t1, abs=1e-6)
    assert res.extra_wait_total == pytest.approx(t2, abs=1e-6)
