from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from ..attacks import AttackConfig, WhiteBoxAttacker
from ..dataio import invert_scaling
from ..exceptions import InstanceError
from ..neuralnet import predict
from ..operations import run_day, schedule_from_commitment
from ..strategy import (
    NodeForecaster,
    StrategyConfig,
    best_first_attack,
    craft_node_attack,
    evaluate_plan,
    random_attack,
    vulnerability_rank,
)
from .factories import linear_model, peaker_case, scaling, triangle_case, windows

HOURS = 4


def forecasters(case):
    """Every load bus forecasts 140 MW per hour; a 1 degree attack moves it by 12 MW."""
    params = scaling()
    model = linear_model(params)
    data = windows(params, HOURS)
    clean = invert_scaling(params, predict(model, data), "load")
    return {bus: NodeForecaster(bus, WhiteBoxAttacker(model), data, params, clean) for bus in case.load_buses}


def strategy(n_adv, epsilon=1.0, **kwargs):
    return StrategyConfig(n_adv, AttackConfig(gamma=1, epsilon=epsilon), **kwargs)


def blind(n_adv, seed=0):
    return strategy(n_adv, knowledge="blind", seed=seed)


class BestFirstTests(SimpleTestCase):
    def setUp(self):
        self.case = peaker_case()
        self.nodes = forecasters(self.case)

    def test_clean_forecast(self):
        np.testing.assert_allclose(self.nodes[2].clean_mw, 140.0)

    def test_increase_forces_the_peaker_on(self):
        plan = best_first_attack(self.case, self.nodes, strategy(2))
        self.assertEqual(plan.nodes, [2])
        self.assertEqual(plan.directions, {2: "increase"})
        self.assertTrue(plan.changed)
        np.testing.assert_array_equal(plan.clean_schedule.u[1], [0] * HOURS)
        np.testing.assert_array_equal(plan.schedule.u[1], [1] * HOURS)
        np.testing.assert_allclose(plan.attacked_loads[:, 1], 152.0)
        np.testing.assert_allclose(plan.attacked_loads[:, 2], 140.0)
        record = plan.to_record(self.case)
        self.assertEqual(record["unit_hours_changed"], HOURS)
        self.assertEqual({d["generator"] for d in record["commitment_diff"]}, {"PEAK"})
        self.assertEqual(record["nodes"][0]["bus"], 2)

    def test_small_budget_uses_every_node_without_a_change(self):
        plan = best_first_attack(self.case, self.nodes, strategy(2, epsilon=0.2))
        self.assertEqual(plan.nodes, [2, 3])
        self.assertFalse(plan.changed)
        self.assertEqual(set(plan.directions), {2, 3})

    def test_adversarial_schedule_costs_the_startup(self):
        plan = best_first_attack(self.case, self.nodes, strategy(1))
        actual = plan.clean_loads
        attacked = evaluate_plan(self.case, plan, actual)
        clean = run_day(self.case, plan.clean_loads, actual)
        self.assertFalse(attacked.shed_occurred)
        self.assertAlmostEqual(attacked.total_cost - clean.total_cost, 100.0, delta=1e-4)

    def test_no_adversaries_means_no_attack(self):
        plan = best_first_attack(self.case, self.nodes, strategy(0))
        self.assertEqual(plan.nodes, [])
        self.assertFalse(plan.changed)
        np.testing.assert_array_equal(plan.attacked_loads, plan.clean_loads)

    def test_zero_budget_leaves_the_forecasts_alone(self):
        plan = best_first_attack(self.case, self.nodes, strategy(2, epsilon=0.0))
        np.testing.assert_array_equal(plan.attacked_loads, plan.clean_loads)
        self.assertFalse(plan.changed)

    def test_every_load_bus_needs_a_forecaster(self):
        with self.assertRaises(InstanceError):
            best_first_attack(self.case, {2: self.nodes[2]}, strategy(1))

    def test_craft_moves_the_forecast_in_the_named_direction(self):
        node = self.nodes[3]
        up = craft_node_attack(node, AttackConfig(gamma=1, epsilon=1.0), "increase")
        down = craft_node_attack(node, AttackConfig(gamma=1, epsilon=1.0), "decrease")
        np.testing.assert_allclose(up.attacked_mw(), 152.0)
        np.testing.assert_allclose(down.attacked_mw(), 128.0)
        with self.assertRaises(InstanceError):
            craft_node_attack(node, AttackConfig(gamma=1, epsilon=1.0), "sideways")


class RandomAttackTests(SimpleTestCase):
    def setUp(self):
        self.case = peaker_case()
        self.nodes = forecasters(self.case)

    def test_same_seed_same_choice(self):
        a = random_attack(self.case, self.nodes, blind(1, seed=11))
        b = random_attack(self.case, self.nodes, blind(1, seed=11))
        self.assertEqual(a.nodes, b.nodes)
        self.assertEqual(a.directions, b.directions)
        np.testing.assert_array_equal(a.attacked_loads, b.attacked_loads)

    def test_takes_at_most_every_load_bus(self):
        for n_adv in (2, 5):
            with self.subTest(n_adv=n_adv):
                plan = random_attack(self.case, self.nodes, blind(n_adv, seed=3))
                self.assertEqual(sorted(plan.nodes), [2, 3])
                self.assertEqual(plan.strategy, "random")

    def test_no_adversaries(self):
        plan = random_attack(self.case, self.nodes, blind(0))
        self.assertEqual(plan.nodes, [])
        self.assertTrue(plan.schedule.same_as(plan.clean_schedule))


class VulnerabilityTests(SimpleTestCase):
    def setUp(self):
        self.case = triangle_case(limit=100.0, loads=((1, 0.25), (2, 0.25), (3, 0.5)))

    def schedule(self, flows, output):
        schedule = schedule_from_commitment(self.case, [[1]], p=[[output]])
        schedule.flows = np.array([flows], dtype=np.float64)
        return schedule

    def test_loaded_line_ranks_its_end_buses_first(self):
        report = vulnerability_rank(self.case, self.schedule([99.0, 10.0, 20.0], 250.0))
        self.assertEqual(report.ranked, [1, 2, 3])
        self.assertAlmostEqual(dict(report.scores)[1], 0.99 + 0.5)
        self.assertAlmostEqual(dict(report.scores)[2], 0.99)
        self.assertAlmostEqual(report.line_slack["1-2"]["mw"], 1.0)
        self.assertAlmostEqual(report.generator_headroom["G1"]["headroom_mw"], 250.0)

    def test_ties_go_to_the_lowest_bus(self):
        report = vulnerability_rank(self.case, self.schedule([0.0, 0.0, 0.0], 0.0))
        self.assertEqual(report.ranked, [1, 2, 3])
        self.assertEqual(report.top(), 1)

    def test_excluded_buses_are_skipped(self):
        report = vulnerability_rank(self.case, self.schedule([99.0, 10.0, 20.0], 250.0), exclude=[1])
        self.assertEqual(report.ranked, [2, 3])


class StrategyConfigTests(SimpleTestCase):
    def test_validation(self):
        with self.assertRaises(InstanceError):
            strategy(-1)
        with self.assertRaises(InstanceError):
            strategy(1, knowledge="psychic")

    def test_each_search_checks_the_attacker_knowledge(self):
        case = peaker_case()
        nodes = forecasters(case)
        with self.assertRaises(InstanceError):
            best_first_attack(case, nodes, blind(1))
        with self.assertRaises(InstanceError):
            random_attack(case, nodes, strategy(1, knowledge="topology"))
        with mock.patch("forecastattack.strategy.vulnerability_rank") as rank:
            random_attack(case, nodes, blind(2, seed=5))
        rank.assert_not_called()
