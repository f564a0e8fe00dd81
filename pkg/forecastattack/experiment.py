"""Pipeline stages behind the management commands.

Every stage reads and writes one output directory:

    data/aggregate.csv, data/bus_<id>.csv     synthetic series
    models/<label>.npz, models/metrics.json   forecasters and clean test metrics
    attack_sweep.json/.csv                    MAPE per attacker, direction and epsilon
    forecast_overlay.json                     clean vs attacked aggregate forecast
    days.jsonl, run_report.json, shed_days.csv
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .attacks import (
    AttackConfig,
    BlackBoxAttacker,
    QueryHandle,
    TransferAttacker,
    WhiteBoxAttacker,
    attack_series,
    train_substitute,
)
from .dataio import (
    SynthConfig,
    complete_days,
    fit_scaling,
    format_hours,
    invert_scaling,
    load_csv,
    make_windows,
    split,
    synth_generate,
    windows_for_day,
    write_csv,
)
from .exceptions import ConfigError, MissingArtifacts
from .fileio import atomic_write_json, atomic_write_jsonl, atomic_write_text, read_json
from .forms import ExperimentConfigForm
from .grid import parse_case
from .milp import BnBConfig
from .neuralnet import (
    default_model_config,
    default_train_config,
    evaluate_forecasts,
    init_model,
    load_model,
    predict,
    save_model,
    train,
)
from .operations import UCInstance, run_day, solve_uc
from .seeding import derive_seed
from .strategy import NodeForecaster, StrategyConfig, best_first_attack, evaluate_plan, random_attack

logger = logging.getLogger(__name__)

AGGREGATE = "aggregate"
ATTACKERS = ("whitebox", "blackbox", "transfer")
SWEEP_DIRECTIONS = (("decrease", 1), ("increase", -1))


def read_config(path=None, **overrides):
    """Validate a YAML experiment document plus flag overrides (flags win)."""
    payload = {}
    if path:
        try:
            with open(path, encoding="utf-8") as handle:
                payload = yaml.safe_load(handle) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}", path=str(path)) from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file is not valid YAML: {exc}", path=str(path)) from exc
        if not isinstance(payload, dict):
            raise ConfigError("config document must be a mapping of keys to values", path=str(path))
    unknown = sorted(set(payload) - set(ExperimentConfigForm.base_fields))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}", keys=unknown)
    data = {key: _form_value(value) for key, value in payload.items()}
    data.update({key: _form_value(value) for key, value in overrides.items() if value is not None})
    form = ExperimentConfigForm(data=data)
    if not form.is_valid():
        errors = form.errors.get_json_data()
        summary = "; ".join(f"{key}: {item['message']}" for key, items in errors.items() for item in items)
        raise ConfigError(f"invalid experiment config: {summary}", errors=errors)
    return form.experiment_values()


def _form_value(value):
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return value


def config_hash(values):
    text = json.dumps(values, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class Experiment:
    values: dict
    out: Path
    _case: object = field(default=None, repr=False)

    def __post_init__(self):
        self.out = Path(self.out)

    @property
    def seed(self):
        return int(self.values["seed"])

    @property
    def case(self):
        if self._case is None:
            self._case = parse_case(self.values["case"])
        return self._case

    def path(self, *parts):
        return self.out.joinpath(*parts)

    def require(self, *parts):
        path = self.path(*parts)
        if not path.exists():
            raise MissingArtifacts(f"{path} is missing; run the earlier pipeline stage first", path=str(path))
        return path

    def labels(self):
        return [AGGREGATE] + [f"bus_{bus}" for bus in self.case.load_buses]

    def bnb(self):
        return BnBConfig(relative_gap=self.values["uc_relative_gap"], node_limit=self.values["uc_node_limit"])

    def attack_config(self, gamma=1, epsilon=None):
        v = self.values
        return AttackConfig(
            gamma=gamma,
            epsilon=v["attack_epsilon"] if epsilon is None else epsilon,
            norm=v["attack_norm"],
            beta=v["attack_beta"],
            delta=v["attack_delta"],
            iterations=v["attack_iterations"],
            query_budget=v["query_budget"],
            mode=v["attack_mode"],
        )


def generate_data(exp):
    v = exp.values
    case = exp.case
    cfg = SynthConfig(
        days=v["days"],
        stations=v["stations"],
        seed=derive_seed(exp.seed, "data"),
        noise=v["noise"],
        shares=case.shares,
    )
    if v["base_load_mw"]:
        ratio = v["base_load_mw"] / cfg.base_load_mw
        cfg = replace(cfg, base_load_mw=v["base_load_mw"], temp_sensitivity=cfg.temp_sensitivity * ratio)
    aggregate, nodes = synth_generate(cfg)
    case.check_capacity(aggregate.load.max())
    paths = [write_csv(aggregate, exp.path("data", f"{AGGREGATE}.csv"))]
    for bus, ds in sorted(nodes.items()):
        paths.append(write_csv(ds, exp.path("data", f"bus_{bus}.csv")))
    logger.info("Wrote %d data files to %s", len(paths), exp.path("data"))
    return paths


def load_datasets(exp):
    return {label: load_csv(exp.require("data", f"{label}.csv")) for label in exp.labels()}


@dataclass
class Prepared:
    """Windows of one series, split chronologically, under the training scaling."""

    scaling: object
    train: list
    test: list
    layout_width: int


def prepare(exp, ds):
    v = exp.values
    train_ds, _ = split(ds, v["train_fraction"])
    scaling = fit_scaling(train_ds)
    windows = make_windows(ds, v["history_hours"], v["horizon_hours"], scaling)
    boundary = int(train_ds.timestamps[-1])
    train_windows = [w for w in windows if w.target_hour <= boundary]
    test_windows = [w for w in windows if w.target_hour > boundary]
    if not train_windows or not test_windows:
        raise ConfigError("the split leaves no training or no test windows", boundary=format_hours(boundary))
    return Prepared(scaling, train_windows, test_windows, windows[0].shape[1])


def _model_configs(exp, label, input_shape, role="model"):
    v = exp.values
    overrides = {}
    if v["hidden_sizes"]:
        overrides["hidden_sizes"] = v["hidden_sizes"]
    model_cfg = default_model_config(v["model_family"], input_shape, derive_seed(exp.seed, role, label), **overrides)
    train_overrides = {key: v[key] for key in ("epochs", "learning_rate") if v[key] is not None}
    train_cfg = default_train_config(v["model_family"], derive_seed(exp.seed, role, label, "sgd"), **train_overrides)
    return model_cfg, train_cfg


def train_models(exp):
    datasets = load_datasets(exp)
    metrics = {}
    for label, ds in datasets.items():
        prepared = prepare(exp, ds)
        shape = (exp.values["history_hours"] + 1, prepared.layout_width)
        model_cfg, train_cfg = _model_configs(exp, label, shape)
        model = train(init_model(model_cfg, prepared.scaling), prepared.train, train_cfg)
        save_model(model, exp.path("models", f"{label}.npz"))
        result = evaluate_forecasts(predict(model, prepared.test), prepared.test, prepared.scaling)
        metrics[label] = result.to_dict()
        logger.info("Forecaster %s: test MAE %.4f, MAPE %.2f%%", label, result.mae, result.mape)
    atomic_write_json(exp.path("models", "metrics.json"), metrics)
    return metrics


def load_forecaster(exp, label):
    return load_model(exp.require("models", f"{label}.npz"))


def _eval_windows(exp, prepared):
    days = complete_days(prepared.test)[: exp.values["eval_days"]]
    if not days:
        raise ConfigError("the test period holds no complete day", test_windows=len(prepared.test))
    selected = [w for day in days for w in windows_for_day(prepared.test, day)]
    return days, selected


def _attacker(kind, model, substitute=None, budget=None):
    if kind == "whitebox":
        return WhiteBoxAttacker(model)
    handle = QueryHandle.from_model(model, budget)
    if kind == "blackbox":
        return BlackBoxAttacker(handle)
    return TransferAttacker(substitute, handle)


def _substitute(exp, label, prepared):
    model_cfg, train_cfg = _model_configs(exp, label, prepared.train[0].shape, role="substitute")
    return train_substitute(prepared.train, model_cfg, train_cfg, prepared.scaling)


def attack_sweep(exp):
    """MAPE of the aggregate forecaster under each attacker, direction and epsilon.

    Budgets are swept in increasing order and each attack starts from the
    previous budget's adversarial window.
    """
    ds = load_datasets(exp)[AGGREGATE]
    prepared = prepare(exp, ds)
    model = load_forecaster(exp, AGGREGATE)
    _, windows = _eval_windows(exp, prepared)
    substitute = _substitute(exp, AGGREGATE, prepared)
    clean = evaluate_forecasts(predict(model, windows), windows, prepared.scaling)
    epsilons = sorted(set(exp.values["epsilons"]))
    rows = [{"attacker": "clean", "direction": "none", "epsilon": 0.0, "mae": clean.mae, "mape": clean.mape, "queries": 0}]
    overlay = {}
    for kind in ATTACKERS:
        for direction, gamma in SWEEP_DIRECTIONS:
            starts = None
            for epsilon in epsilons:
                attacker = _attacker(kind, model, substitute)
                series = attack_series(attacker, windows, exp.attack_config(gamma, epsilon), prepared.scaling, starts)
                starts = [r.adversarial for r in series.results]
                metrics = evaluate_forecasts(series.attacked, windows, prepared.scaling)
                rows.append(
                    {
                        "attacker": kind,
                        "direction": direction,
                        "epsilon": epsilon,
                        "mae": metrics.mae,
                        "mape": metrics.mape,
                        "queries": int(sum(r.queries_used for r in series.results)),
                    }
                )
                logger.info("%s %s eps=%.2f: MAPE %.2f%%", kind, direction, epsilon, metrics.mape)
                if kind == "blackbox" and epsilon == epsilons[-1]:
                    overlay[direction] = series
    sweep = {"clean": clean.to_dict(), "windows": len(windows), "rows": rows}
    atomic_write_json(exp.path("attack_sweep.json"), sweep)
    atomic_write_text(exp.path("attack_sweep.csv"), pd.DataFrame(rows).to_csv(index=False, float_format="%.6f"))
    if overlay:
        atomic_write_json(exp.path("forecast_overlay.json"), _overlay_record(windows, overlay, prepared.scaling, epsilons[-1]))
    return sweep


def _overlay_record(windows, overlay, scaling, epsilon):
    half = len(windows) // 2
    decrease, increase = overlay["decrease"], overlay["increase"]
    attacked = np.concatenate([decrease.attacked_mw()[:half], increase.attacked_mw()[half:]])
    return {
        "epsilon": epsilon,
        "switch_index": half,
        "hours": [format_hours(w.target_hour) for w in windows],
        "actual_mw": invert_scaling(scaling, np.array([w.target for w in windows]), "load").round(3).tolist(),
        "clean_mw": decrease.clean_mw().round(3).tolist(),
        "attacked_mw": attacked.round(3).tolist(),
    }


def _mape(forecast, actual):
    return float(np.mean(np.abs(forecast - actual) / actual) * 100.0)


def _node_forecasters(exp, kind, models, prepared, day, substitutes):
    nodes = {}
    actual = {}
    for bus in exp.case.load_buses:
        label = f"bus_{bus}"
        windows = windows_for_day(prepared[label].test, day)
        scaling = prepared[label].scaling
        model = models[label]
        clean_mw = invert_scaling(scaling, predict(model, windows), "load")
        attacker = _attacker(kind, model, substitutes.get(label))
        nodes[bus] = NodeForecaster(bus, attacker, windows, scaling, clean_mw)
        actual[bus] = invert_scaling(scaling, np.array([w.target for w in windows]), "load")
    return nodes, actual


def _plan_row(day_label, epsilon, strategy, plan, day, clean_day, actual_total):
    forecast_total = plan.attacked_loads.sum(axis=1)
    return {
        "day": day_label,
        "epsilon": epsilon,
        "strategy": strategy,
        "nodes": list(plan.nodes),
        "directions": [plan.directions[bus] for bus in plan.nodes],
        "schedule_changed": plan.changed,
        "unit_hours_changed": plan.schedule.difference(plan.clean_schedule),
        "queries_used": int(sum(r.queries_used for s in plan.series.values() for r in s.results)),
        "mape": _mape(forecast_total, actual_total),
        "clean_cost": clean_day.total_cost,
        "attacked_cost": day.total_cost,
        "cost_delta": day.total_cost - clean_day.total_cost,
        "shed_causes": day.shed_causes(),
        **day.summary_row(),
    }


def simulate(exp, epsilons=None):
    """Clean, best-first and random days over the first ``eval_days`` test days."""
    v = exp.values
    case = exp.case
    datasets = load_datasets(exp)
    prepared = {label: prepare(exp, ds) for label, ds in datasets.items() if label != AGGREGATE}
    models = {label: load_forecaster(exp, label) for label in prepared}
    substitutes = {}
    if v["attacker"] == "transfer":
        substitutes = {label: _substitute(exp, label, p) for label, p in prepared.items()}
    first = prepared[f"bus_{case.load_buses[0]}"]
    days = complete_days(first.test)[: v["eval_days"]]
    if not days:
        raise ConfigError("the test period holds no complete day")
    epsilons = sorted(set(epsilons or [v["attack_epsilon"]]))
    bnb = exp.bnb()

    rows = []
    day_records = []
    for day in days:
        label = format_hours([day])[0]
        nodes, actual = _node_forecasters(exp, v["attacker"], models, prepared, day, substitutes)
        clean_loads = case.bus_loads({bus: node.clean_mw for bus, node in nodes.items()})
        actual_loads = case.bus_loads(actual)
        actual_total = actual_loads.sum(axis=1)
        clean_schedule = solve_uc(UCInstance(case, clean_loads), bnb)
        clean_day = run_day(case, clean_loads, actual_loads, schedule=clean_schedule)
        clean_row = {
            "day": label,
            "epsilon": 0.0,
            "strategy": "clean",
            "nodes": [],
            "directions": [],
            "schedule_changed": False,
            "unit_hours_changed": 0,
            "queries_used": 0,
            "mape": _mape(clean_loads.sum(axis=1), actual_total),
            "clean_cost": clean_day.total_cost,
            "attacked_cost": clean_day.total_cost,
            "cost_delta": 0.0,
            "shed_causes": clean_day.shed_causes(),
            **clean_day.summary_row(),
        }
        rows.append(clean_row)
        record = {"day": label, "clean": clean_day.to_dict(case), "attacks": []}
        for epsilon in epsilons:
            for strategy in v["strategies"]:
                cfg = StrategyConfig(
                    n_adv=v["n_adv"],
                    attack=exp.attack_config(1, epsilon),
                    knowledge="topology" if strategy == "best_first" else "blind",
                    seed=derive_seed(exp.seed, "random", label, epsilon),
                    bnb=bnb,
                )
                search = best_first_attack if strategy == "best_first" else random_attack
                plan = search(case, nodes, cfg, clean_schedule=clean_schedule)
                attacked_day = evaluate_plan(case, plan, actual_loads, bnb)
                row = _plan_row(label, epsilon, strategy, plan, attacked_day, clean_day, actual_total)
                rows.append(row)
                record["attacks"].append(
                    {"epsilon": epsilon, "plan": plan.to_record(case), "result": attacked_day.to_dict(case)}
                )
                logger.info(
                    "%s eps=%.1f %s: nodes %s, shed %.1f MWh", label, epsilon, strategy, plan.nodes, row["shed_mwh"]
                )
        day_records.append(record)

    report = {
        "provenance": {
            "config_hash": config_hash(v),
            "seed": exp.seed,
            "seeds": {"data": derive_seed(exp.seed, "data")},
            "versions": {"forecastattack": __version__, "numpy": np.__version__, "pandas": pd.__version__},
            "case": case.name,
            "attacker": v["attacker"],
            "n_adv": v["n_adv"],
        },
        "rows": rows,
        "aggregates": summarize_rows(rows),
    }
    atomic_write_jsonl(exp.path("days.jsonl"), day_records)
    atomic_write_json(exp.path("run_report.json"), report)
    atomic_write_text(exp.path("shed_days.csv"), shed_days_frame(report["aggregates"]).to_csv(index=False))
    return report


def summarize_rows(rows):
    """Aggregates of a RunReport, recomputable from its rows alone."""
    frame = pd.DataFrame(rows)
    if frame.empty:
        return {"days": 0, "groups": []}
    groups = []
    for (strategy, epsilon), part in frame.groupby(["strategy", "epsilon"], sort=True):
        groups.append(
            {
                "strategy": strategy,
                "epsilon": float(epsilon),
                "days": int(len(part)),
                "shed_days": int(part["shed_occurred"].sum()),
                "shed_mwh": round(float(part["shed_mwh"].sum()), 6),
                "mean_mape": round(float(part["mape"].mean()), 6),
                "mean_cost_delta": round(float(part["cost_delta"].mean()), 6),
                "schedule_changes": int(part["schedule_changed"].sum()),
            }
        )
    return {"days": int(frame["day"].nunique()), "groups": groups}


def shed_days_frame(aggregates):
    columns = ["strategy", "epsilon", "days", "shed_days", "shed_mwh"]
    return pd.DataFrame([{key: g[key] for key in columns} for g in aggregates["groups"]], columns=columns)


def load_report(exp):
    return read_json(exp.require("run_report.json"))