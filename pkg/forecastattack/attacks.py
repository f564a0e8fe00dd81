"""Adversarial perturbation of the temperature inputs of a load forecaster.

Every attack minimises ``gamma * f(window)`` over windows whose temperature
rows stay within an epsilon ball (physical degrees, one ball per lag row) of the
clean window. ``gamma = +1`` pushes the forecast down, ``gamma = -1`` pushes it
up. Steps follow the sign of the (analytic or estimated) gradient, and the best
iterate seen, clean window included, is returned.
"""
import logging
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .conf import app_settings
from .dataio import invert_scaling
from .exceptions import AttackError, BarrierDomain, QueryBudgetExhausted
from .neuralnet import forward, grad_input, init_model, predict, train

logger = logging.getLogger(__name__)

NORMS = ("linf", "l1", "l2")
MODES = ("projection", "barrier")
BOUNDARY_TOL = 1e-12
BACKTRACK_STEPS = 30


@dataclass(frozen=True)
class AttackConfig:
    gamma: int
    epsilon: float
    norm: str = "linf"
    alpha: float = None
    beta: float = 0.01
    delta: float = 1e-3
    iterations: int = 10
    query_budget: int = None
    mode: str = "projection"

    def __post_init__(self):
        if self.gamma not in (-1, 1):
            raise AttackError(f"gamma must be -1 or +1, got {self.gamma}", gamma=self.gamma)
        if self.epsilon < 0:
            raise AttackError(f"epsilon must be non-negative, got {self.epsilon}", epsilon=self.epsilon)
        if self.norm not in NORMS:
            raise AttackError(f"unknown norm {self.norm!r}", norm=self.norm)
        if self.mode not in MODES:
            raise AttackError(f"unknown attack mode {self.mode!r}", mode=self.mode)
        if self.alpha is not None and self.alpha < 0:
            raise AttackError(f"step size must be non-negative, got {self.alpha}", alpha=self.alpha)
        if self.delta <= 0 or self.beta <= 0:
            raise AttackError("delta and beta must be positive", delta=self.delta, beta=self.beta)
        if self.iterations < 1:
            raise AttackError("at least one iteration is required", iterations=self.iterations)
        if self.query_budget is not None and self.query_budget < 0:
            raise AttackError("query budget must be non-negative", query_budget=self.query_budget)

    def step_size(self, window):
        """Alpha in scaled units; defaults to one fifth of epsilon on the average temperature column."""
        if self.alpha is not None:
            return self.alpha
        return self.epsilon / float(np.mean(_temperature_spans(window))) / 5.0

    def to_dict(self):
        return {
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "norm": self.norm,
            "alpha": self.alpha,
            "beta": self.beta,
            "delta": self.delta,
            "iterations": self.iterations,
            "query_budget": self.query_budget,
            "mode": self.mode,
        }


def default_attack_config(gamma, epsilon, **overrides):
    defaults = app_settings()["ATTACK"]
    values = {key: defaults[key] for key in ("norm", "iterations", "delta", "beta", "mode")}
    values.update(overrides)
    return AttackConfig(gamma=gamma, epsilon=epsilon, **values)


def _columns(window):
    return np.flatnonzero(window.mask.any(axis=0))


def _temperature_spans(window):
    return window.spans[_columns(window)]


def _row_norms(deviation, norm):
    if norm == "linf":
        return np.abs(deviation).max(axis=1)
    if norm == "l1":
        return np.abs(deviation).sum(axis=1)
    return np.sqrt((deviation ** 2).sum(axis=1))


def perturbation_norm(adversarial, clean, norm):
    """Largest per-lag norm of the temperature deviation, in physical degrees."""
    cols = _columns(clean)
    deviation = (adversarial.values[:, cols] - clean.values[:, cols]) * clean.spans[cols]
    return float(_row_norms(deviation, norm).max()) if deviation.size else 0.0


def _project_l1(v, radius):
    if radius <= 0:
        return np.zeros_like(v)
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    ranks = np.arange(1, u.size + 1)
    rho = np.flatnonzero(u > (css - radius) / ranks)[-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def project(xadv, xclean, cfg):
    """Nearest point to ``xadv`` in the per-lag epsilon ball around ``xclean``, clipped to [0, 1].

    Only temperature coordinates may differ from ``xclean``; everything else is
    copied from the clean window. Rows already inside the ball are kept as is.
    """
    if xadv.shape != xclean.shape:
        raise AttackError("windows differ in shape", adversarial=list(xadv.shape), clean=list(xclean.shape))
    cols = _columns(xclean)
    spans = xclean.spans[cols]
    clean = xclean.values[:, cols]
    adv = xadv.values[:, cols]
    deviation = (adv - clean) * spans
    eps = cfg.epsilon
    if cfg.norm == "linf":
        outside = np.abs(deviation) > eps
        projected = np.where(outside, clean + np.clip(deviation, -eps, eps) / spans, adv)
    else:
        norms = _row_norms(deviation, cfg.norm)
        projected = adv.copy()
        for i in np.flatnonzero(norms > eps):
            if cfg.norm == "l2":
                row = deviation[i] * (eps / norms[i])
            else:
                row = _project_l1(deviation[i], eps)
            projected[i] = clean[i] + row / spans
    values = xclean.values.copy()
    values[:, cols] = np.clip(projected, 0.0, 1.0)
    return xclean.with_values(values)


def _barrier_terms(values, clean, cfg):
    """Per-lag barrier value and its gradient with respect to the scaled temperature coordinates."""
    cols = _columns(clean)
    spans = clean.spans[cols]
    deviation = (values[:, cols] - clean.values[:, cols]) * spans
    norms = _row_norms(deviation, cfg.norm)
    slack = cfg.epsilon - norms
    if np.any(slack <= BOUNDARY_TOL):
        lag = int(np.flatnonzero(slack <= BOUNDARY_TOL)[0])
        raise BarrierDomain(
            "iterate lies on or outside the epsilon boundary",
            lag=lag,
            norm=float(norms[lag]),
            epsilon=cfg.epsilon,
        )
    if cfg.norm == "l1":
        direction = np.sign(deviation)
    elif cfg.norm == "l2":
        safe = np.where(norms > 0, norms, 1.0)
        direction = deviation / safe[:, None]
    else:
        direction = np.zeros_like(deviation)
        for i in np.flatnonzero(norms > 0):
            j = int(np.argmax(np.abs(deviation[i])))
            direction[i, j] = np.sign(deviation[i, j])
    grad = np.zeros_like(values)
    grad[:, cols] = cfg.beta * direction * spans / slack[:, None]
    value = -cfg.beta * float(np.log(slack).sum())
    return value, grad


def _inside_barrier(values, clean, cfg):
    cols = _columns(clean)
    deviation = (values[:, cols] - clean.values[:, cols]) * clean.spans[cols]
    return bool(np.all(_row_norms(deviation, cfg.norm) < cfg.epsilon - BOUNDARY_TOL))


@dataclass
class AttackResult:
    adversarial: object
    clean: object
    gamma: int
    epsilon: float
    norm: str
    clean_forecast: float
    attacked_forecast: float
    perturbation_norm: float
    iterations: int = 0
    gradient_queries: int = 0
    evaluation_queries: int = 0
    exhausted: bool = False

    @property
    def queries_used(self):
        return self.gradient_queries + self.evaluation_queries

    @property
    def objective_change(self):
        return self.gamma * (self.attacked_forecast - self.clean_forecast)

    def to_record(self, scaling):
        cols = _columns(self.clean)
        stations = [f"temp_{c - 1}" for c in cols]
        clean_temps = np.column_stack(
            [invert_scaling(scaling, self.clean.values[:, c], name) for c, name in zip(cols, stations)]
        )
        adv_temps = np.column_stack(
            [invert_scaling(scaling, self.adversarial.values[:, c], name) for c, name in zip(cols, stations)]
        )
        return {
            "target_hour": int(self.clean.target_hour),
            "exogenous_hours": [int(h) for h in self.clean.hours],
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "norm": self.norm,
            "clean_temperatures": clean_temps.tolist(),
            "adversarial_temperatures": adv_temps.tolist(),
            "perturbation_norm": self.perturbation_norm,
            "clean_forecast_mw": float(invert_scaling(scaling, self.clean_forecast, "load")),
            "attacked_forecast_mw": float(invert_scaling(scaling, self.attacked_forecast, "load")),
            "iterations": self.iterations,
            "queries_used": self.queries_used,
            "gradient_queries": self.gradient_queries,
            "evaluation_queries": self.evaluation_queries,
            "exhausted": self.exhausted,
        }


class _BestIterate:
    def __init__(self, gamma, window, forecast):
        self.gamma = gamma
        self.window = window
        self.forecast = forecast

    def offer(self, window, forecast):
        if forecast is not None and self.gamma * forecast < self.gamma * self.forecast:
            self.window = window
            self.forecast = forecast


def _sign_step(window, clean, gradient, alpha):
    values = window.values - alpha * np.sign(gradient) * clean.mask
    return window.with_values(values)


def _restore_mask(values, clean):
    out = clean.values.copy()
    cols = _columns(clean)
    out[:, cols] = np.clip(values[:, cols], 0.0, 1.0)
    return clean.with_values(out)


def _initial_iterate(window, cfg, start):
    if start is None:
        return window
    if cfg.mode == "projection":
        return project(start, window, cfg)
    return _restore_mask(start.values, window)


def _barrier_step(window, clean, gradient, alpha, cfg):
    step = alpha
    for _ in range(BACKTRACK_STEPS):
        candidate = _restore_mask(window.values - step * np.sign(gradient) * clean.mask, clean)
        if _inside_barrier(candidate.values, clean, cfg):
            return candidate
        step *= 0.5
    return window


def _iterate(window, cfg, start, evaluate, gradient, can_continue):
    """Shared sign-gradient loop; ``gradient`` returns d(gamma * f)/dX for an iterate."""
    clean_forecast = evaluate(window)
    best = _BestIterate(cfg.gamma, window, clean_forecast)
    current = _initial_iterate(window, cfg, start)
    if start is not None:
        best.offer(current, evaluate(current))
    alpha = cfg.step_size(window)
    done = 0
    exhausted = False
    for _ in range(cfg.iterations):
        if not can_continue():
            exhausted = True
            break
        grad = gradient(current)
        if cfg.mode == "barrier":
            _, barrier_grad = _barrier_terms(current.values, window, cfg)
            current = _barrier_step(current, window, grad + barrier_grad, alpha, cfg)
        else:
            current = project(_sign_step(current, window, grad, alpha), window, cfg)
        best.offer(current, evaluate(current))
        done += 1
    result = AttackResult(
        adversarial=best.window,
        clean=window,
        gamma=cfg.gamma,
        epsilon=cfg.epsilon,
        norm=cfg.norm,
        clean_forecast=clean_forecast,
        attacked_forecast=best.forecast,
        perturbation_norm=perturbation_norm(best.window, window, cfg.norm),
        iterations=done,
        exhausted=exhausted,
    )
    return result


def whitebox_attack(model, window, cfg, start=None):
    """Sign-gradient attack using analytic input gradients of ``model``."""
    if cfg.mode == "barrier":
        _barrier_terms(_initial_iterate(window, cfg, start).values, window, cfg)
    result = _iterate(
        window,
        cfg,
        start,
        evaluate=lambda w: forward(model, w),
        gradient=lambda w: cfg.gamma * grad_input(model, w),
        can_continue=lambda: True,
    )
    result.gradient_queries = result.iterations
    result.evaluation_queries = 1 + result.iterations + (start is not None)
    return result


class QueryHandle:
    """Counting, optionally budgeted, window -> forecast oracle.

    Wraps a callable taking an (N, H+1, d) array and returning N scaled
    forecasts. The counter is lock-protected; each row of a batch counts as one
    query.
    """

    def __init__(self, oracle, budget=None):
        self._oracle = oracle
        self._budget = budget
        self._count = 0
        self._lock = threading.Lock()

    @classmethod
    def from_model(cls, model, budget=None):
        return cls(lambda batch: predict(model, batch), budget)

    @property
    def queries_used(self):
        with self._lock:
            return self._count

    @property
    def remaining(self):
        if self._budget is None:
            return None
        with self._lock:
            return self._budget - self._count

    def _reserve(self, n):
        with self._lock:
            if self._budget is not None and self._count + n > self._budget:
                raise QueryBudgetExhausted(
                    f"{n} queries requested, {self._budget - self._count} remaining",
                    requested=n,
                    remaining=self._budget - self._count,
                )
            self._count += n

    def query(self, inputs):
        batch = np.asarray(inputs, dtype=np.float64)
        if batch.ndim == 2:
            batch = batch[None, :, :]
        self._reserve(batch.shape[0])
        return np.asarray(self._oracle(batch), dtype=np.float64).reshape(-1)

    def __call__(self, window):
        return float(self.query(window.values)[0])


def grad_estimate(q, window, delta, mask):
    """Two-sided finite-difference gradient over the ``mask`` coordinates (2 queries each)."""
    if delta <= 0:
        raise AttackError("delta must be positive", delta=delta)
    coords = np.argwhere(mask)
    needed = 2 * len(coords)
    remaining = q.remaining
    if remaining is not None and remaining < needed:
        raise QueryBudgetExhausted(
            f"gradient estimate needs {needed} queries, {remaining} remaining", requested=needed, remaining=remaining
        )
    batch = np.repeat(window.values[None, :, :], needed, axis=0)
    rows, cols = coords[:, 0], coords[:, 1]
    plus = np.arange(0, needed, 2)
    batch[plus, rows, cols] += delta
    batch[plus + 1, rows, cols] -= delta
    out = q.query(batch)
    gradient = np.zeros(window.shape)
    gradient[rows, cols] = (out[plus] - out[plus + 1]) / (2.0 * delta)
    return gradient


def blackbox_attack(q, window, cfg, start=None):
    """Sign-gradient attack driven only by forecast queries through ``q``.

    One query evaluates the clean window, one each new iterate, and every
    iteration spends ``2 * |mask|`` queries on the gradient estimate. An
    iteration starts only when its full cost fits in the remaining budget
    (the smaller of ``cfg.query_budget`` and the handle's own budget);
    otherwise the best iterate so far is returned with ``exhausted`` set.
    """
    n_masked = int(window.mask.sum())
    spent = {"gradient": 0, "evaluation": 0}

    def available():
        limits = [r for r in (q.remaining,) if r is not None]
        if cfg.query_budget is not None:
            limits.append(cfg.query_budget - spent["gradient"] - spent["evaluation"])
        return min(limits) if limits else None

    def evaluate(w):
        left = available()
        if left is not None and left < 1:
            return None
        spent["evaluation"] += 1
        return q(w)

    def gradient(w):
        spent["gradient"] += 2 * n_masked
        return cfg.gamma * grad_estimate(q, w, cfg.delta, w.mask)

    def can_continue():
        left = available()
        return left is None or left >= 2 * n_masked + 1

    left = available()
    if left is not None and left < 1:
        raise QueryBudgetExhausted("no query left to evaluate the clean window", requested=1, remaining=left)
    if left is not None and left < 2 * n_masked + 1:
        # not even one step fits: report the clean window as is
        start = None
    if cfg.mode == "barrier":
        _barrier_terms(_initial_iterate(window, cfg, start).values, window, cfg)
    result = _iterate(window, cfg, start, evaluate, gradient, can_continue)
    result.gradient_queries = spent["gradient"]
    result.evaluation_queries = spent["evaluation"]
    if result.exhausted:
        logger.warning(
            "Query budget exhausted after %d iterations (%d queries) at hour %d",
            result.iterations,
            result.queries_used,
            window.target_hour,
        )
    return result


def train_substitute(windows, model_cfg, train_cfg, scaling=None):
    """Fit the attacker's own forecaster; the target model is never queried."""
    return train(init_model(model_cfg, scaling), windows, train_cfg)


class WhiteBoxAttacker:
    kind = "whitebox"

    def __init__(self, model):
        self.model = model

    def attack(self, window, cfg, start=None):
        return whitebox_attack(self.model, window, cfg, start)

    def forecast(self, windows):
        return predict(self.model, windows)


class BlackBoxAttacker:
    kind = "blackbox"

    def __init__(self, handle):
        self.handle = handle

    def attack(self, window, cfg, start=None):
        return blackbox_attack(self.handle, window, cfg, start)

    def forecast(self, windows):
        return self.handle.query(np.stack([w.values for w in windows]))


class TransferAttacker:
    """Crafts perturbations on a substitute model and scores them on the target."""

    kind = "transfer"

    def __init__(self, substitute, target):
        self.substitute = substitute
        self.target = target

    def attack(self, window, cfg, start=None):
        crafted = whitebox_attack(self.substitute, window, cfg, start)
        clean_forecast, attacked_forecast = self.target.query(
            np.stack([window.values, crafted.adversarial.values])
        )
        return replace(
            crafted,
            clean_forecast=float(clean_forecast),
            attacked_forecast=float(attacked_forecast),
            gradient_queries=0,
            evaluation_queries=2,
        )

    def forecast(self, windows):
        return self.target.query(np.stack([w.values for w in windows]))


def learn_and_attack(substitute_data, target_q, window, model_cfg, train_cfg, cfg, scaling=None):
    substitute = train_substitute(substitute_data, model_cfg, train_cfg, scaling)
    return TransferAttacker(substitute, target_q).attack(window, cfg)


@dataclass
class AttackSeries:
    """Per-hour attack results for a chronologically ordered run of windows.

    ``grid_hours`` lists every exogenous hour touched by the windows; the clean
    and adversarial grids hold the scaled temperatures at those hours, where the
    latest window containing an hour decides its adversarial value.
    """

    hours: np.ndarray
    clean: np.ndarray
    attacked: np.ndarray
    results: list
    grid_hours: np.ndarray
    clean_grid: np.ndarray
    adversarial_grid: np.ndarray
    scaling: object = field(default=None, repr=False)

    def clean_mw(self):
        return invert_scaling(self.scaling, self.clean, "load")

    def attacked_mw(self):
        return invert_scaling(self.scaling, self.attacked, "load")

    def grid_degrees(self, grid):
        return np.column_stack(
            [invert_scaling(self.scaling, grid[:, s], f"temp_{s}") for s in range(grid.shape[1])]
        )

    def to_record(self):
        record = {
            "hours": [int(h) for h in self.hours],
            "grid_hours": [int(h) for h in self.grid_hours],
            "queries_used": int(sum(r.queries_used for r in self.results)),
        }
        if self.scaling is not None:
            record.update(
                {
                    "clean_mw": self.clean_mw().tolist(),
                    "attacked_mw": self.attacked_mw().tolist(),
                    "clean_temperatures": self.grid_degrees(self.clean_grid).tolist(),
                    "adversarial_temperatures": self.grid_degrees(self.adversarial_grid).tolist(),
                }
            )
        else:
            record.update({"clean": self.clean.tolist(), "attacked": self.attacked.tolist()})
        return record


def attack_series(attacker, windows, cfg, scaling=None, starts=None):
    """Attack each window independently under the same budget (rolling application)."""
    hours = np.array([w.target_hour for w in windows])
    if np.any(np.diff(hours) <= 0):
        raise AttackError("windows must be in chronological order")
    results = []
    for i, window in enumerate(windows):
        start = starts[i] if starts is not None else None
        results.append(attacker.attack(window, cfg, start))

    cols = _columns(windows[0])
    grid = {}
    for window, result in zip(windows, results):
        for row, hour in enumerate(window.hours):
            grid[int(hour)] = (window.values[row, cols], result.adversarial.values[row, cols])
    grid_hours = np.array(sorted(grid))
    return AttackSeries(
        hours=hours,
        clean=np.array([r.clean_forecast for r in results]),
        attacked=np.array([r.attacked_forecast for r in results]),
        results=results,
        grid_hours=grid_hours,
        clean_grid=np.array([grid[h][0] for h in grid_hours]),
        adversarial_grid=np.array([grid[h][1] for h in grid_hours]),
        scaling=scaling,
    )
