import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from ..exceptions import BadShape, CheckpointError, Diverged, ShapeMismatch
from ..neuralnet import (
    ModelConfig,
    TrainConfig,
    default_model_config,
    evaluate,
    evaluate_forecasts,
    forward,
    grad_input,
    grad_params,
    init_model,
    load_model,
    loss,
    predict,
    save_model,
    train,
)
from .factories import linear_model, scaling, window, windows

SHAPE = (3, 5)


def batch(n=6, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, *SHAPE))
    y = 0.2 + 0.6 * X[:, -1, 0]
    return X, y


def relative_error(a, b):
    return abs(a - b) / max(1e-6, abs(a) + abs(b))


class GradientTests(SimpleTestCase):
    """Analytic gradients against central differences along random directions."""

    samples = 200
    step = 1e-4
    families = ("feedforward", "recurrent")
    activations = ("tanh", "sigmoid", "linear")

    def random_model(self, k, rng):
        cfg = ModelConfig(
            self.families[k % 2],
            tuple(int(h) for h in rng.integers(2, 6, size=1 + k % 2)),
            SHAPE,
            activation=self.activations[k % 3],
            output="linear" if k % 4 == 3 else "sigmoid",
            seed=k,
        )
        model = init_model(cfg)
        for value in model.params.values():
            value += rng.normal(0.0, 0.3, size=value.shape)
        return model

    def test_input_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for k in range(self.samples):
            model = self.random_model(k, rng)
            X = rng.random(SHAPE)
            direction = rng.normal(size=SHAPE)
            analytic = float(np.sum(grad_input(model, X) * direction))
            numeric = (forward(model, X + self.step * direction) - forward(model, X - self.step * direction)) / (
                2 * self.step
            )
            worst = max(worst, relative_error(analytic, numeric))
        self.assertLess(worst, 1e-4)

    def test_parameter_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        worst = 0.0
        for k in range(self.samples):
            model = self.random_model(k, rng)
            X = rng.random((4, *SHAPE))
            # targets half a unit away keep the L1 loss smooth inside the step
            y = predict(model, X) + rng.choice([-0.5, 0.5], size=4)
            grads = grad_params(model, (X, y))
            self.assertEqual(set(grads), set(model.params))
            direction = {name: rng.normal(size=value.shape) for name, value in model.params.items()}
            analytic = sum(float(np.sum(grads[name] * direction[name])) for name in grads)
            saved = {name: value.copy() for name, value in model.params.items()}
            values = []
            for sign in (1.0, -1.0):
                for name, value in model.params.items():
                    value[...] = saved[name] + sign * self.step * direction[name]
                values.append(loss(model, (X, y)))
            for name, value in model.params.items():
                value[...] = saved[name]
            numeric = (values[0] - values[1]) / (2 * self.step)
            worst = max(worst, relative_error(analytic, numeric))
        self.assertLess(worst, 1e-4)



class ModelTests(SimpleTestCase):
    def test_zero_network_predicts_midpoint(self):
        model = init_model(ModelConfig("recurrent", (4, 2), SHAPE))
        for value in model.params.values():
            value[...] = 0.0
        self.assertEqual(forward(model, np.ones(SHAPE)), 0.5)

    def test_parameter_layout(self):
        ff = init_model(ModelConfig("feedforward", (4, 2), SHAPE))
        self.assertEqual(ff.params["W0"].shape, (15, 4))
        self.assertEqual(ff.params["W2"].shape, (2, 1))
        rnn = init_model(ModelConfig("recurrent", (4, 2), SHAPE))
        self.assertEqual(rnn.params["Wx"].shape, (5, 4))
        self.assertEqual(rnn.params["Wh"].shape, (4, 4))
        self.assertEqual(rnn.params["W1"].shape, (4, 2))
        self.assertEqual(rnn.dense_layers(), [("W1", "b1"), ("W2", "b2")])

    def test_same_seed_same_weights(self):
        cfg = default_model_config("recurrent", SHAPE, seed=9, hidden_sizes=(6,))
        a, b = init_model(cfg), init_model(cfg)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_predict_matches_forward(self):
        model = init_model(ModelConfig("feedforward", (4,), SHAPE, seed=3))
        X, _ = batch(5)
        np.testing.assert_allclose(predict(model, X), [forward(model, x) for x in X])

    def test_bad_config_and_shape(self):
        with self.assertRaises(BadShape):
            ModelConfig("transformer", (4,), SHAPE)
        with self.assertRaises(BadShape):
            ModelConfig("feedforward", (), SHAPE)
        model = init_model(ModelConfig("feedforward", (4,), SHAPE))
        with self.assertRaises(ShapeMismatch):
            forward(model, np.zeros((2, 5)))


class TrainingTests(SimpleTestCase):
    def test_training_lowers_the_loss_and_leaves_the_input_model(self):
        model = init_model(ModelConfig("feedforward", (8,), SHAPE, activation="tanh", seed=0))
        before = {name: value.copy() for name, value in model.params.items()}
        data = batch(64, seed=1)
        trained = train(model, data, TrainConfig(learning_rate=0.05, epochs=30, batch_size=8, seed=0))
        self.assertEqual(len(trained.loss_history), 31)
        self.assertLess(trained.loss_history[-1], trained.loss_history[0])
        for name, value in model.params.items():
            np.testing.assert_array_equal(value, before[name])

    def test_divergence_is_reported(self):
        model = init_model(ModelConfig("feedforward", (4,), SHAPE, activation="linear", output="linear", seed=0))
        with np.errstate(all="ignore"), self.assertRaises(Diverged):
            train(model, batch(16), TrainConfig(learning_rate=1e200, epochs=3, batch_size=4))

    def test_forecast_metrics(self):
        params = scaling(load=(100.0, 200.0))
        data = windows(params, 4)
        perfect = evaluate_forecasts([w.target for w in data], data, params)
        self.assertEqual((perfect.mae, perfect.mape), (0.0, 0.0))
        off = evaluate_forecasts([w.target + 0.1 for w in data], data, params)
        self.assertAlmostEqual(off.mae, 0.1)
        self.assertAlmostEqual(off.mape, 10.0 / 150.0 * 100.0)

    def test_evaluate_uses_the_model_scaling(self):
        params = scaling(load=(100.0, 200.0))
        metrics = evaluate(linear_model(params), windows(params, 3))
        self.assertAlmostEqual(metrics.mae, 0.15)
        self.assertAlmostEqual(metrics.mape, 10.0)


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_save_and_load(self):
        params = scaling()
        w = window(params)
        model = init_model(ModelConfig("recurrent", (4,), w.shape, seed=5), params)
        model.loss_history = [0.5, 0.25]
        restored = load_model(save_model(model, self.dir / "model.npz"))
        self.assertEqual(restored.config, model.config)
        self.assertEqual(restored.scaling, params)
        self.assertEqual(restored.loss_history, [0.5, 0.25])
        self.assertEqual(forward(restored, w), forward(model, w))

    def test_unreadable_checkpoint(self):
        path = self.dir / "broken.npz"
        path.write_bytes(b"not a checkpoint")
        with self.assertRaises(CheckpointError):
            load_model(path)
