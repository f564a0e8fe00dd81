import itertools

import numpy as np
from django.test import SimpleTestCase, tag

from ..conf import CASES_DIR
from ..exceptions import InstanceError, UCInfeasible
from ..grid import case_from_dict, parse_case
from ..milp import BnBConfig, solve_lp
from ..operations import (
    EDInstance,
    UCInstance,
    build_uc,
    load_servable,
    run_day,
    schedule_from_commitment,
    solve_ed,
    solve_uc,
)
from .factories import case_payload, generator, line, single_bus_case


def two_unit_case():
    return single_bus_case(
        generator("G1", p_min=20.0, p_max=100.0, marginal_cost=10.0, no_load_cost=50.0, startup_cost=200.0,
                  min_up=2, min_down=2, ramp_up=100.0, ramp_down=100.0, initial_hours=3, initial_output=50.0),
        generator("G2", p_min=10.0, p_max=80.0, marginal_cost=30.0, no_load_cost=20.0, startup_cost=100.0,
                  shutdown_cost=10.0, min_up=2, ramp_up=80.0, ramp_down=80.0, initial_on=False, initial_hours=5),
    )


def enumerated_optimum(inst):
    """Cheapest plan over every commitment pattern, each solved as a dispatch LP."""
    form = build_uc(inst)
    lp = form.mip.lp
    best = np.inf
    for bits in itertools.product((0, 1), repeat=form.u.size):
        fixed = schedule_from_commitment(inst.case, np.reshape(bits, form.u.shape))
        lower, upper = lp.lower.copy(), lp.upper.copy()
        allowed = True
        for block, values in ((form.u, fixed.u), (form.z, fixed.z), (form.y, fixed.y)):
            if np.any(values < lp.lower[block]) or np.any(values > lp.upper[block]):
                allowed = False
            lower[block] = values
            upper[block] = values
        if not allowed:
            continue
        solution = solve_lp(lp.with_bounds(lower, upper))
        if solution.optimal:
            best = min(best, solution.objective)
    return best


def assert_commitment_logic(test, case, schedule):
    initial = np.array([1 if g.initial_on else 0 for g in case.generators])
    previous = np.concatenate([initial[:, None], schedule.u[:, :-1]], axis=1)
    np.testing.assert_array_equal(schedule.u - previous, schedule.z - schedule.y)
    test.assertTrue(np.all(schedule.z + schedule.y <= 1))
    for i, gen in enumerate(case.generators):
        for t in np.flatnonzero(schedule.z[i]):
            test.assertTrue(schedule.u[i, t:t + gen.min_up].all(), f"{gen.name} stops early after hour {t}")
        for t in np.flatnonzero(schedule.y[i]):
            test.assertFalse(schedule.u[i, t:t + gen.min_down].any(), f"{gen.name} restarts early after hour {t}")


class CommitmentTests(SimpleTestCase):
    def test_single_unit_is_forced_on(self):
        case = single_bus_case(generator("G1", p_max=200.0, initial_output=100.0))
        schedule = solve_uc(UCInstance(case, np.full((4, 1), 100.0), horizon=4))
        np.testing.assert_array_equal(schedule.u, [[1, 1, 1, 1]])
        np.testing.assert_allclose(schedule.p, [[100.0] * 4])
        self.assertEqual(schedule.z.sum(), 0)
        self.assertAlmostEqual(schedule.planned_cost, 4000.0)

    def test_matches_enumeration(self):
        case = two_unit_case()
        inst = UCInstance(case, np.array([[60.0], [110.0], [150.0], [70.0]]), horizon=4)
        schedule = solve_uc(inst)
        self.assertAlmostEqual(schedule.planned_cost, enumerated_optimum(inst), places=6)
        self.assertEqual(schedule.status, "optimal")
        assert_commitment_logic(self, case, schedule)

    def test_reserve_brings_a_second_unit(self):
        case = single_bus_case(
            generator("BIG", p_max=100.0, marginal_cost=10.0),
            generator("SMALL", p_max=50.0, marginal_cost=40.0, no_load_cost=5.0, initial_on=False),
        )
        schedule = solve_uc(UCInstance(case, np.full((2, 1), 98.0), horizon=2))
        np.testing.assert_array_equal(schedule.u, [[1, 1], [1, 1]])
        np.testing.assert_allclose(schedule.p[1], [0.0, 0.0], atol=1e-7)
        without = solve_uc(UCInstance(case, np.full((2, 1), 98.0), reserve_fraction=0.0, horizon=2))
        np.testing.assert_array_equal(without.u[1], [0, 0])

    def test_initial_state_obligations(self):
        case = single_bus_case(
            generator("FREE", p_max=200.0, initial_on=False, initial_hours=5),
            generator("DEAR", p_max=200.0, no_load_cost=1000.0, min_up=3, initial_output=50.0),
        )
        schedule = solve_uc(UCInstance(case, np.full((4, 1), 50.0), horizon=4))
        np.testing.assert_array_equal(schedule.u[1], [1, 1, 0, 0])
        assert_commitment_logic(self, case, schedule)

    def test_infeasible_demand(self):
        case = case_from_dict(case_payload([1, 2], [line(1, 2, 500.0)], [generator("G1", p_max=500.0)], [(2, 1.0)]))
        loads = case.nodal_loads(np.full(24, 600.0))
        with self.assertRaises(UCInfeasible):
            solve_uc(UCInstance(case, loads))

    def test_repeatable(self):
        case = two_unit_case()
        inst = UCInstance(case, np.array([[60.0], [110.0], [150.0], [70.0]]), horizon=4)
        self.assertTrue(solve_uc(inst).same_as(solve_uc(inst)))

    def test_instance_validation(self):
        case = two_unit_case()
        for loads, horizon in ((np.ones((4, 2)), 4), (np.ones((3, 1)), 4), (-np.ones((4, 1)), 4)):
            with self.subTest(shape=loads.shape, horizon=horizon), self.assertRaises(InstanceError):
                UCInstance(case, loads, horizon=horizon)


class DispatchTests(SimpleTestCase):
    def test_merit_order(self):
        case = single_bus_case(generator("CHEAP", marginal_cost=10.0), generator("DEAR", marginal_cost=50.0))
        result = solve_ed(EDInstance(case, 0, [120.0], [1, 1], [100.0, 50.0]))
        np.testing.assert_allclose(result.output, [100.0, 20.0], atol=1e-7)
        self.assertAlmostEqual(result.total_shed, 0.0)
        self.assertAlmostEqual(result.dispatch_cost, 2000.0)
        self.assertEqual(result.binding["generators_at_capacity"], ["CHEAP"])
        self.assertIsNone(result.shed_cause)

    def test_capacity_deficit_sheds_load(self):
        case = single_bus_case(generator("G1", p_max=80.0, initial_output=80.0))
        result = solve_ed(EDInstance(case, 3, [100.0], [1], [80.0]))
        self.assertAlmostEqual(result.total_shed, 20.0)
        self.assertAlmostEqual(result.shed_cost, 20.0 * case.voll)
        self.assertEqual(result.shed_cause, "generation_limit")
        self.assertEqual(result.to_dict(case)["shed"], {"1": 20.0})

    def test_ramp_limit_sheds_load(self):
        case = single_bus_case(generator("G1", ramp_up=10.0, initial_output=50.0))
        result = solve_ed(EDInstance(case, 0, [70.0], [1], [50.0]))
        self.assertAlmostEqual(result.output[0], 60.0)
        self.assertAlmostEqual(result.total_shed, 10.0)
        self.assertEqual(result.shed_cause, "ramp")
        self.assertEqual(result.binding["ramp_limited"], ["G1"])

    def test_line_limit_sheds_load(self):
        case = case_from_dict(case_payload([1, 2], [line(1, 2, 50.0)], [generator("G1", p_max=500.0)], [(2, 1.0)]))
        result = solve_ed(EDInstance(case, 0, [0.0, 100.0], [1], [0.0]))
        self.assertAlmostEqual(result.output[0], 50.0)
        self.assertAlmostEqual(result.shed[1], 50.0)
        self.assertEqual(result.shed_cause, "line_flow")
        self.assertEqual(result.binding["lines"], ["1-2"])

    def test_minimum_output_is_curtailed(self):
        case = single_bus_case(generator("G1", p_min=80.0, initial_output=80.0))
        with self.assertLogs("forecastattack.operations", level="WARNING"):
            result = solve_ed(EDInstance(case, 0, [50.0], [1], [80.0]))
        self.assertAlmostEqual(result.output[0], 80.0)
        self.assertAlmostEqual(result.curtailed.sum(), 30.0)
        balance = result.output.sum() + result.total_shed - result.curtailed.sum()
        self.assertAlmostEqual(balance, 50.0)

    def test_uncommitted_units_stay_off(self):
        case = single_bus_case(generator("CHEAP", marginal_cost=1.0), generator("DEAR", marginal_cost=50.0))
        result = solve_ed(EDInstance(case, 0, [60.0], [0, 1], [0.0, 60.0]))
        np.testing.assert_allclose(result.output, [0.0, 60.0], atol=1e-7)

    def test_unreachable_minimum_is_held_at_the_ramp_limit(self):
        case = single_bus_case(generator("G1", p_min=50.0, ramp_up=20.0, initial_on=False))
        inst = EDInstance(case, 0, [40.0], [1], [0.0])
        with self.assertLogs("forecastattack.operations", level="WARNING"):
            lower, upper = inst.output_bounds()
        self.assertEqual((lower[0], upper[0]), (20.0, 20.0))

    def test_servability(self):
        case = single_bus_case(generator("G1", p_max=80.0, initial_output=80.0))
        self.assertFalse(load_servable(EDInstance(case, 0, [100.0], [1], [80.0])))
        self.assertTrue(load_servable(EDInstance(case, 0, [60.0], [1], [80.0])))


class DayTests(SimpleTestCase):
    def test_perfect_forecast_sheds_nothing(self):
        case = parse_case(CASES_DIR / "two_bus.json")
        loads = case.nodal_loads(250.0 + 100.0 * np.sin(np.arange(24) / 24.0 * 2 * np.pi))
        day = run_day(case, loads, loads)
        self.assertEqual(len(day.hours), 24)
        self.assertFalse(day.shed_occurred)
        self.assertAlmostEqual(day.total_cost, day.schedule.planned_cost, delta=1e-4)

    def test_withheld_unit_sheds_load(self):
        case = single_bus_case(generator("A", initial_output=100.0), generator("B", initial_on=False))
        loads = np.full((2, 1), 150.0)
        schedule = schedule_from_commitment(case, [[1, 1], [0, 0]])
        day = run_day(case, loads, loads, schedule=schedule)
        self.assertAlmostEqual(day.shed_mwh, 100.0)
        self.assertEqual(day.shed_hours, [0, 1])
        self.assertEqual(day.shed_causes()["generation_limit"], 2)
        self.assertAlmostEqual(day.total_cost, 2000.0 + 100.0 * case.voll)
        self.assertEqual(day.summary_row()["shed_occurred"], 1)

    def test_ramps_chain_from_the_previous_hour(self):
        case = single_bus_case(generator("G1", p_max=200.0, ramp_up=30.0, initial_output=50.0))
        loads = np.full((3, 1), 100.0)
        day = run_day(case, loads, loads, schedule=schedule_from_commitment(case, [[1, 1, 1]]))
        self.assertEqual(day.shed_hours, [0])
        self.assertAlmostEqual(day.hours[0].output[0], 80.0)
        self.assertAlmostEqual(day.hours[1].output[0], 100.0)
        self.assertEqual(day.shed_causes()["ramp"], 1)

    def test_schedule_must_cover_the_day(self):
        case = single_bus_case(generator("G1"))
        with self.assertRaises(InstanceError):
            run_day(case, np.ones((3, 1)), np.ones((3, 1)), schedule=schedule_from_commitment(case, [[1, 1]]))

    @tag("slow")
    def test_bundled_case_with_a_perfect_forecast(self):
        case = parse_case(CASES_DIR / "stressed14.json")
        loads = case.nodal_loads(7000.0 + 2500.0 * np.sin(np.pi * np.arange(24) / 23.0))
        day = run_day(case, loads, loads, cfg=BnBConfig(relative_gap=1e-4))
        self.assertFalse(day.shed_occurred)
        assert_commitment_logic(self, case, day.schedule)
