import numpy as np
from django.test import SimpleTestCase

from ..attacks import (
    AttackConfig,
    BlackBoxAttacker,
    QueryHandle,
    TransferAttacker,
    WhiteBoxAttacker,
    attack_series,
    blackbox_attack,
    grad_estimate,
    learn_and_attack,
    perturbation_norm,
    project,
    whitebox_attack,
)
from ..exceptions import AttackError, BarrierDomain, QueryBudgetExhausted
from ..neuralnet import ModelConfig, TrainConfig, forward, grad_input, init_model
from .factories import linear_model, scaling, window, windows

# window() puts every temperature at 0.5 scaled on a 20 degree span
SPAN = 20.0
MASKED = 3 * 2


class ProjectionTests(SimpleTestCase):
    def setUp(self):
        self.params = scaling()
        self.clean = window(self.params)

    def shifted(self, offsets):
        values = self.clean.values.copy()
        values[:, 1:3] += np.asarray(offsets) / SPAN
        values[:, 0] = 0.9
        values[:, 5] = 1.0
        return self.clean.with_values(values)

    def test_linf_clips_each_coordinate(self):
        adv = self.shifted([[3.0, -0.5], [-4.0, 1.0], [0.0, 2.5]])
        out = project(adv, self.clean, AttackConfig(gamma=1, epsilon=2.0))
        np.testing.assert_allclose((out.values[:, 1:3] - 0.5) * SPAN, [[2.0, -0.5], [-2.0, 1.0], [0.0, 2.0]])

    def test_non_temperature_columns_come_from_the_clean_window(self):
        out = project(self.shifted(np.ones((3, 2))), self.clean, AttackConfig(gamma=1, epsilon=5.0))
        mask = self.clean.mask
        np.testing.assert_array_equal(out.values[~mask], self.clean.values[~mask])

    def test_rows_inside_the_ball_are_unchanged(self):
        for norm in ("linf", "l1", "l2"):
            with self.subTest(norm=norm):
                adv = self.shifted([[0.5, 0.5], [0.1, -0.2], [0.0, 0.3]])
                out = project(adv, self.clean, AttackConfig(gamma=1, epsilon=1.5, norm=norm))
                np.testing.assert_allclose(out.values[:, 1:3], adv.values[:, 1:3])

    def test_l1_and_l2_land_on_the_boundary(self):
        adv = self.shifted([[3.0, 4.0], [0.0, 0.0], [-6.0, 8.0]])
        for norm in ("l1", "l2"):
            with self.subTest(norm=norm):
                cfg = AttackConfig(gamma=1, epsilon=2.0, norm=norm)
                out = project(adv, self.clean, cfg)
                self.assertAlmostEqual(perturbation_norm(out, self.clean, norm), 2.0)
        l2 = project(adv, self.clean, AttackConfig(gamma=1, epsilon=2.0, norm="l2"))
        np.testing.assert_allclose((l2.values[0, 1:3] - 0.5) * SPAN, [1.2, 1.6])

    def test_result_stays_in_the_unit_box(self):
        adv = self.shifted(np.full((3, 2), 30.0))
        out = project(adv, self.clean, AttackConfig(gamma=1, epsilon=50.0))
        self.assertTrue(np.all(out.values[:, 1:3] == 1.0))


class WhiteBoxTests(SimpleTestCase):
    def setUp(self):
        self.params = scaling()
        self.clean = window(self.params)
        self.model = linear_model(self.params)

    def test_linear_model_moves_by_the_full_budget(self):
        for gamma in (1, -1):
            with self.subTest(gamma=gamma):
                result = whitebox_attack(self.model, self.clean, AttackConfig(gamma=gamma, epsilon=1.0))
                expected = result.clean_forecast - gamma * 0.1 * MASKED * (1.0 / SPAN)
                self.assertAlmostEqual(result.attacked_forecast, expected, places=9)
                self.assertAlmostEqual(result.perturbation_norm, 1.0, places=9)
                self.assertLessEqual(result.perturbation_norm, 1.0 + 1e-9)

    def test_zero_budget_returns_the_clean_window(self):
        result = whitebox_attack(self.model, self.clean, AttackConfig(gamma=1, epsilon=0.0))
        np.testing.assert_array_equal(result.adversarial.values, self.clean.values)
        self.assertEqual(result.attacked_forecast, result.clean_forecast)

    def test_query_accounting(self):
        result = whitebox_attack(self.model, self.clean, AttackConfig(gamma=1, epsilon=1.0, iterations=4))
        self.assertEqual((result.iterations, result.gradient_queries, result.evaluation_queries), (4, 4, 5))

    def test_never_worse_than_clean(self):
        model = init_model(ModelConfig("recurrent", (5,), self.clean.shape, seed=3))
        for gamma in (1, -1):
            result = whitebox_attack(model, self.clean, AttackConfig(gamma=gamma, epsilon=2.0))
            self.assertLessEqual(gamma * result.attacked_forecast, gamma * result.clean_forecast)
            self.assertEqual(result.attacked_forecast, forward(model, result.adversarial))

    def test_warm_start_is_monotone_in_the_budget(self):
        model = init_model(ModelConfig("feedforward", (6,), self.clean.shape, activation="tanh", seed=8))
        small = whitebox_attack(model, self.clean, AttackConfig(gamma=1, epsilon=1.0))
        large = whitebox_attack(model, self.clean, AttackConfig(gamma=1, epsilon=2.0), start=small.adversarial)
        self.assertLessEqual(large.attacked_forecast, small.attacked_forecast)

    def test_barrier_mode_stays_strictly_inside(self):
        cfg = AttackConfig(gamma=1, epsilon=1.0, mode="barrier", iterations=20)
        result = whitebox_attack(self.model, self.clean, cfg)
        self.assertLess(result.perturbation_norm, 1.0)
        self.assertLess(result.attacked_forecast, result.clean_forecast)

    def test_barrier_rejects_a_start_on_the_boundary(self):
        values = self.clean.values.copy()
        values[:, 1:3] += 1.0 / SPAN
        start = self.clean.with_values(values)
        with self.assertRaises(BarrierDomain):
            whitebox_attack(self.model, self.clean, AttackConfig(gamma=1, epsilon=1.0, mode="barrier"), start=start)

    def test_invalid_config(self):
        for kwargs in ({"gamma": 0}, {"epsilon": -1.0}, {"norm": "l3"}, {"mode": "clip"}, {"iterations": 0}):
            values = {"gamma": 1, "epsilon": 1.0, **kwargs}
            with self.subTest(kwargs=kwargs), self.assertRaises(AttackError):
                AttackConfig(**values)


class BlackBoxTests(SimpleTestCase):
    def setUp(self):
        self.params = scaling()
        self.clean = window(self.params)
        self.model = linear_model(self.params)

    def test_gradient_estimate_of_a_linear_model_is_exact(self):
        q = QueryHandle.from_model(self.model)
        estimate = grad_estimate(q, self.clean, 1e-3, self.clean.mask)
        exact = grad_input(self.model, self.clean) * self.clean.mask
        np.testing.assert_allclose(estimate, exact, atol=1e-9)
        self.assertEqual(q.queries_used, 2 * MASKED)

    def test_matches_the_whitebox_attack_on_a_linear_model(self):
        cfg = AttackConfig(gamma=1, epsilon=1.0)
        white = whitebox_attack(self.model, self.clean, cfg)
        black = blackbox_attack(QueryHandle.from_model(self.model), self.clean, cfg)
        self.assertAlmostEqual(black.attacked_forecast, white.attacked_forecast, places=9)

    def test_query_accounting(self):
        q = QueryHandle.from_model(self.model)
        result = blackbox_attack(q, self.clean, AttackConfig(gamma=1, epsilon=1.0, iterations=10))
        self.assertEqual(result.queries_used, 1 + 10 * (2 * MASKED + 1))
        self.assertEqual(result.gradient_queries, 10 * 2 * MASKED)
        self.assertEqual(q.queries_used, result.queries_used)
        self.assertFalse(result.exhausted)

    def test_budget_stops_between_iterations(self):
        cfg = AttackConfig(gamma=1, epsilon=1.0, query_budget=1 + 3 * 13 + 5)
        with self.assertLogs("forecastattack.attacks", level="WARNING"):
            result = blackbox_attack(QueryHandle.from_model(self.model), self.clean, cfg)
        self.assertTrue(result.exhausted)
        self.assertEqual(result.iterations, 3)
        self.assertEqual(result.queries_used, 40)
        self.assertLess(result.attacked_forecast, result.clean_forecast)

    def test_handle_budget(self):
        q = QueryHandle.from_model(self.model, budget=1)
        q(self.clean)
        with self.assertRaises(QueryBudgetExhausted):
            q(self.clean)
        self.assertEqual(q.remaining, 0)

    def test_budget_below_one_step_returns_the_clean_window(self):
        expected = forward(self.model, self.clean)
        for budget in (1, MASKED, 2 * MASKED):
            with self.subTest(budget=budget):
                cfg = AttackConfig(gamma=1, epsilon=1.0, iterations=5, query_budget=budget)
                with self.assertLogs("forecastattack.attacks", level="WARNING"):
                    result = blackbox_attack(QueryHandle.from_model(self.model), self.clean, cfg)
                self.assertTrue(result.exhausted)
                self.assertEqual(result.iterations, 0)
                self.assertEqual(result.queries_used, 1)
                self.assertAlmostEqual(result.clean_forecast, expected)
                self.assertEqual(result.attacked_forecast, result.clean_forecast)
                np.testing.assert_array_equal(result.adversarial.values, self.clean.values)

    def test_warm_start_is_ignored_when_no_step_fits(self):
        values = self.clean.values.copy()
        values[:, 1:3] -= 1.0 / SPAN
        start = self.clean.with_values(values)
        cfg = AttackConfig(gamma=1, epsilon=1.0, iterations=5, query_budget=2 * MASKED)
        with self.assertLogs("forecastattack.attacks", level="WARNING"):
            result = blackbox_attack(QueryHandle.from_model(self.model), self.clean, cfg, start=start)
        np.testing.assert_array_equal(result.adversarial.values, self.clean.values)
        self.assertFalse(np.isnan(result.attacked_forecast))

    def test_zero_budget_cannot_even_evaluate(self):
        cfg = AttackConfig(gamma=1, epsilon=1.0, query_budget=0)
        with self.assertRaises(QueryBudgetExhausted):
            blackbox_attack(QueryHandle.from_model(self.model), self.clean, cfg)
        q = QueryHandle.from_model(self.model, budget=0)
        with self.assertRaises(QueryBudgetExhausted):
            blackbox_attack(q, self.clean, AttackConfig(gamma=1, epsilon=1.0))


class TransferAndSeriesTests(SimpleTestCase):
    def setUp(self):
        self.params = scaling()
        self.model = linear_model(self.params)

    def test_transfer_spends_two_target_queries(self):
        target = QueryHandle.from_model(self.model)
        substitute = linear_model(self.params, temp_weight=0.2)
        result = TransferAttacker(substitute, target).attack(window(self.params), AttackConfig(gamma=1, epsilon=1.0))
        self.assertEqual(target.queries_used, 2)
        self.assertEqual(result.queries_used, 2)
        self.assertAlmostEqual(result.attacked_forecast, forward(self.model, result.adversarial))

    def test_series_covers_every_window(self):
        data = windows(self.params, 5)
        series = attack_series(WhiteBoxAttacker(self.model), data, AttackConfig(gamma=-1, epsilon=1.0), self.params)
        self.assertEqual(len(series.results), 5)
        np.testing.assert_array_equal(series.hours, [w.target_hour for w in data])
        np.testing.assert_allclose(series.attacked_mw() - series.clean_mw(), 0.1 * MASKED / SPAN * 400.0)
        self.assertEqual(len(series.grid_hours), 5 + 2)
        record = series.to_record()
        self.assertEqual(len(record["adversarial_temperatures"]), 7)
        np.testing.assert_allclose(np.array(record["adversarial_temperatures"]) - 50.0, 1.0)

    def test_series_needs_chronological_windows(self):
        data = windows(self.params, 3)[::-1]
        with self.assertRaises(AttackError):
            attack_series(WhiteBoxAttacker(self.model), data, AttackConfig(gamma=1, epsilon=1.0))

    def test_blackbox_attacker_forecasts_through_the_handle(self):
        q = QueryHandle.from_model(self.model)
        forecasts = BlackBoxAttacker(q).forecast(windows(self.params, 4))
        self.assertEqual(q.queries_used, 4)
        np.testing.assert_allclose(forecasts, 0.05 + 0.1 * MASKED * 0.5)

    def test_learn_and_attack_never_queries_the_target_while_crafting(self):
        target = QueryHandle.from_model(self.model)
        clean = window(self.params)
        model_cfg = ModelConfig("feedforward", (4,), clean.shape, seed=2)
        train_cfg = TrainConfig(learning_rate=0.01, epochs=2, batch_size=4, seed=2)
        result = learn_and_attack(windows(self.params, 8), target, clean, model_cfg, train_cfg,
                                  AttackConfig(gamma=1, epsilon=1.0), self.params)
        self.assertEqual(target.queries_used, 2)
        self.assertLessEqual(result.perturbation_norm, 1.0 + 1e-9)
        self.assertAlmostEqual(result.attacked_forecast, forward(self.model, result.adversarial))
