import numpy as np
import pytest

from hubline.core import StudyPeriod
from hubline.demand import (
    DelayScenario,
    OuterArrival,
    apply_delay_scenario,
    assemble_demand_model,
    build_demand_model,
    load_commuter_csv,
    load_outer_csv,
    sample_delay_scenario,
    scale_commuter_hub_rows,
    synthetic_demand_inputs,
    write_commuter_csv,
    write_outer_csv,
)

from conftest import constant_demand


def quadrature_first_wait(dm, i, j, t0, depart, step=1e-3):
    """Segment-aligned midpoint rule; independent of the closed form."""
    total = 0.0
    lo = max(t0, dm.period.start)
    hi = min(depart, dm.period.end)
    for a, b, r in dm.segments(i, j):
        x, y = max(a, lo), min(b, hi)
        if y <= x:
            continue
        n = max(int(np.ceil((y - x) / step)), 1)
        ts = x + (y - x) * (np.arange(n) + 0.5) / n
        total += float(np.sum(r * (depart - ts) * (y - x) / n))
    return total


class TestIntervalDemand:
    def test_rectangle(self, period):
        dm = constant_demand(period, 3, {(0, 1): 2.0})
        assert dm.interval_demand(0, 1, 10.0, 15.0) == pytest.approx(10.0)

    def test_empty_window(self, period):
        dm = constant_demand(period, 3, {(0, 1): 2.0})
        assert dm.interval_demand(0, 1, 12.0, 12.0) == 0.0

    def test_piecewise_sum(self):
        period = StudyPeriod(0.0, 4.0, 2.0)
        base = {(0, 1): np.array([3.0, 1.0])}
        dm = build_demand_model(base, [], 0.0, 1.0, period, 2, 0)
        assert dm.interval_demand(0, 1, 0.0, 4.0) == pytest.approx(8.0)

    def test_reversed_pair_is_zero(self, period):
        dm = constant_demand(period, 3, {(0, 1): 2.0})
        assert dm.interval_demand(1, 0, 0.0, 60.0) == 0.0
        assert dm.interval_demand(1, 1, 0.0, 60.0) == 0.0

    def test_clamps_outside_period(self, period):
        dm = constant_demand(period, 3, {(0, 1): 2.0})
        assert dm.interval_demand(0, 1, -100.0, 1000.0) == pytest.approx(120.0)

    def test_additivity(self, period):
        rng = np.random.default_rng(3)
        base = {(0, 2): rng.uniform(0, 4, period.n_bins)}
        dm = build_demand_model(base, [], 0.0, 1.0, period, 3, 0)
        for _ in range(50):
            t0, t1, t2 = np.sort(rng.uniform(0, 60, 3))
            whole = dm.interval_demand(0, 2, t0, t2)
            parts = dm.interval_demand(0, 2, t0, t1) + dm.interval_demand(0, 2, t1, t2)
            assert whole == pytest.approx(parts, abs=1e-9)


class TestFirstWaitIntegral:
    def test_constant_rate_closed_form(self, period):
        # rate 2 over a 5-minute window ending at the departure: r*h^2/2
        dm = constant_demand(period, 3, {(0, 1): 2.0})
        assert dm.first_wait_integral(0, 1, 10.0, 15.0) == pytest.approx(25.0)

    def test_zero_rate(self, period):
        dm = constant_demand(period, 3, {(0, 2): 1.0})
        assert dm.first_wait_integral(0, 1, 10.0, 15.0) == 0.0

    def test_rate_step_hand_value(self):
        # rate 4 on [0,2], zero on [2,5], depart at 5: 4*((25)-(9))/2 = 32
        period = StudyPeriod(0.0, 6.0, 1.0)
        base = {(0, 1): np.array([4.0, 4.0, 0.0, 0.0, 0.0, 0.0])}
        dm = build_demand_model(base, [], 0.0, 1.0, period, 2, 0)
        got = dm.first_wait_integral(0, 1, 0.0, 5.0)
        assert got == pytest.approx(32.0, abs=1e-9)
        assert got == pytest.approx(quadrature_first_wait(dm, 0, 1, 0.0, 5.0, 1e-4), abs=1e-6)

    def test_zero_window(self, period):
        dm = constant_demand(period, 3, {(0, 1): 2.0})
        assert dm.first_wait_integral(0, 1, 20.0, 20.0) == 0.0

    def test_monotone_in_departure(self, period):
        rng = np.random.default_rng(11)
        base = {(0, 1): rng.uniform(0, 3, period.n_bins)}
        dm = build_demand_model(base, [], 0.0, 1.0, period, 2, 0)
        vals = [dm.first_wait_integral(0, 1, 5.0, d) for d in np.linspace(5.0, 60.0, 40)]
        assert np.all(np.diff(vals) >= -1e-12)

    def test_matches_quadrature_on_random_rates(self, period):
        rng = np.random.default_rng(19)
        for _ in range(20):
            base = {(0, 1): rng.uniform(0, 5, period.n_bins)}
            dm = build_demand_model(base, [], 0.0, 1.0, period, 2, 0)
            t0, d = np.sort(rng.uniform(0, 60, 2))
            exact = dm.first_wait_integral(0, 1, t0, d)
            approx = quadrature_first_wait(dm, 0, 1, t0, d)
            assert exact == pytest.approx(approx, abs=1e-6)


class TestBuildDemandModel:
    def test_feeder_share_calibration(self, period):
        # base hub demand 400 pax, feeders 600 pax, share 0.6 -> totals 1000
        base = {(0, 1): np.full(period.n_bins, 400.0 / 60.0)}
        outer = [OuterArrival(1, 10.0, 600.0, {1: 1.0})]
        dm = build_demand_model(base, outer, 0.6, 10.0, period, 2, 0)
        assert dm.total_demand() == pytest.approx(1000.0)
        assert dm.interval_demand(0, 1, 10.0, 20.0) == pytest.approx(
            600.0 + 400.0 / 6.0, abs=1e-9
        )

    def test_no_feeders_identity(self, period):
        base = {(0, 1): np.full(period.n_bins, 2.0)}
        dm = build_demand_model(base, [], 0.0, 10.0, period, 2, 0)
        assert dm.total_demand() == pytest.approx(120.0)

    def test_pulse_height(self, period):
        # 120 passengers over a 10-minute spread: 12 pax/min
        outer = [OuterArrival(1, 20.0, 120.0, {1: 1.0})]
        dm = build_demand_model({}, outer, 1.0, 10.0, period, 2, 0)
        assert dm.interval_demand(0, 1, 20.0, 21.0) == pytest.approx(12.0)
        assert dm.interval_demand(0, 1, 19.0, 20.0) == pytest.approx(0.0)
        assert dm.interval_demand(0, 1, 30.0, 31.0) == pytest.approx(0.0)

    def test_share_requires_consistency(self, period):
        base = {(0, 1): np.full(period.n_bins, 1.0)}
        outer = [OuterArrival(1, 10.0, 100.0, {1: 1.0})]
        with pytest.raises(ValueError):
            scale_commuter_hub_rows(base, outer, 0.0, 10.0, period, 0)
        with pytest.raises(ValueError):
            scale_commuter_hub_rows(base, [], 0.5, 10.0, period, 0)

    def test_bad_destination_split_rejected(self):
        with pytest.raises(ValueError):
            OuterArrival(1, 10.0, 100.0, {1: 0.4, 2: 0.4})


class TestDelayScenarios:
    def arrivals(self):
        return [OuterArrival(x, 5.0 * x, 100.0, {1: 1.0}) for x in range(1, 11)]

    def test_empty_scenario(self):
        s = sample_delay_scenario(self.arrivals(), 0, 42)
        assert s.shifts == {}
        assert apply_delay_scenario(self.arrivals(), s) == self.arrivals()

    def test_seed_determinism(self):
        a = sample_delay_scenario(self.arrivals(), 3, 42)
        b = sample_delay_scenario(self.arrivals(), 3, 42)
        assert a == b
        c = sample_delay_scenario(self.arrivals(), 3, 43)
        assert a != c

    def test_delays_in_half_open_interval(self):
        for seed in range(30):
            s = sample_delay_scenario(self.arrivals(), 5, seed)
            for d in s.shifts.values():
                assert 0.0 < d <= 30.0

    def test_delay_mean(self):
        # uniform (0, 30] has mean 15
        rng = np.random.default_rng(0)
        arrivals = self.arrivals()
        draws = []
        for _ in range(10_000):
            s = sample_delay_scenario(arrivals, 10, rng)
            draws.extend(s.shifts.values())
        assert np.mean(draws) == pytest.approx(15.0, abs=0.2)

    def test_too_many_delayed_rejected(self):
        with pytest.raises(ValueError):
            sample_delay_scenario(self.arrivals(), 11, 1)

    def test_unknown_id_rejected(self):
        with pytest.raises(ValueError):
            apply_delay_scenario(self.arrivals(), DelayScenario({99: 5.0}))

    def test_shift_translates_pulse(self, period):
        outer = [OuterArrival(1, 10.0, 120.0, {1: 1.0})]
        shifted = apply_delay_scenario(outer, DelayScenario({1: 10.0}))
        dm = build_demand_model({}, shifted, 1.0, 10.0, period, 2, 0)
        assert dm.interval_demand(0, 1, 20.0, 30.0) == pytest.approx(120.0)
        assert dm.interval_demand(0, 1, 0.0, 20.0) == pytest.approx(0.0)

    def test_truncation_drops_past_end(self, period):
        outer = [OuterArrival(1, period.end - 5.0, 120.0, {1: 1.0})]
        shifted = apply_delay_scenario(outer, DelayScenario({1: 20.0}))
        dm = assemble_demand_model({}, shifted, 10.0, period, 2, 0)
        assert dm.total_demand() == 0.0

    def test_mass_conserved_without_truncation(self, period):
        outer = [OuterArrival(x, 5.0 + 4.0 * x, 50.0, {1: 1.0}) for x in range(5)]
        s = DelayScenario({0: 3.0, 2: 7.5})
        before = assemble_demand_model({}, outer, 10.0, period, 2, 0).total_demand()
        after = assemble_demand_model(
            {}, apply_delay_scenario(outer, s), 10.0, period, 2, 0
        ).total_demand()
        assert before == pytest.approx(after)

    def test_scenario_json_round_trip(self):
        s = sample_delay_scenario(self.arrivals(), 4, 7)
        back = DelayScenario.from_json(s.to_json())
        assert back.shifts.keys() == s.shifts.keys()
        for k in s.shifts:
            assert back.shifts[k] == pytest.approx(s.shifts[k])


class TestSyntheticGenerator:
    def test_peak_bin_calibration(self):
        period = StudyPeriod(450.0, 550.0, 5.0)
        base, outer = synthetic_demand_inputs(period, 13, 4, seed=5, peak_bin_target=1728.0)
        dm = build_demand_model(base, outer, 0.6, 10.0, period, 13, 4)
        edges = period.bin_edges()
        peak = max(dm.origin_interval_demand(4, edges[b], edges[b + 1]) for b in range(20))
        assert peak == pytest.approx(1728.0, rel=1e-9)

    def test_feeder_share_holds(self):
        period = StudyPeriod(450.0, 550.0, 5.0)
        base, outer = synthetic_demand_inputs(period, 13, 4, seed=5, peak_bin_target=1728.0)
        pulse_mass = sum(a.passenger_count for a in outer)
        hub_comm = sum(v.sum() * 5.0 for (i, j), v in base.items() if i == 4)
        assert pulse_mass / (pulse_mass + hub_comm) == pytest.approx(0.6, abs=1e-9)

    def test_deterministic_given_seed(self):
        period = StudyPeriod(450.0, 550.0, 5.0)
        a = synthetic_demand_inputs(period, 13, 4, seed=9, peak_bin_target=1000.0)
        b = synthetic_demand_inputs(period, 13, 4, seed=9, peak_bin_target=1000.0)
        assert a[1] == b[1]
        assert all(np.array_equal(a[0][k], b[0][k]) for k in a[0])


class TestCsvInterfaces:
    def test_commuter_round_trip(self, tmp_path, period):
        rng = np.random.default_rng(2)
        table = {(0, 2): rng.uniform(0, 3, period.n_bins), (1, 2): rng.uniform(0, 1, period.n_bins)}
        path = tmp_path / "commuter.csv"
        write_commuter_csv(path, table, period)
        back = load_commuter_csv(path, period, 3)
        for od in table:
            assert np.allclose(back[od], table[od], atol=1e-8)

    def test_outer_round_trip(self, tmp_path):
        arrivals = [
            OuterArrival(1, 455.0, 900.0, {5: 0.5, 6: 0.5}),
            OuterArrival(2, 470.5, 1200.0, {5: 0.25, 7: 0.75}),
        ]
        path = tmp_path / "outer.csv"
        write_outer_csv(path, arrivals, 13)
        back = load_outer_csv(path, 13)
        assert len(back) == 2
        assert back[0].id == 1 and back[0].passenger_count == pytest.approx(900.0)
        assert back[1].destination_split == {5: 0.25, 7: 0.75}

    def test_bad_pair_rejected(self, tmp_path, period):
        path = tmp_path / "bad.csv"
        path.write_text("origin,destination,bin_start,rate\n3,2,0.0,1.0\n")
        with pytest.raises(ValueError):
            load_commuter_csv(path, period, 5)
