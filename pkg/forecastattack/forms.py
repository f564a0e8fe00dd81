"""Validation forms for grid case elements and experiment configuration documents.

Experiment configuration (YAML, flat keys; every key optional):

    case               path of a grid case JSON file (default: bundled stressed case)
    seed               master seed; every sub-seed is derived from it
    days, stations     synthetic data size (days of hourly data, weather stations)
    noise              load noise as a fraction of nominal load, in [0, 0.2]
    base_load_mw       nominal aggregate load; the temperature response scales with it
    history_hours      H, lagged rows per window minus one
    horizon_hours      k, forecast lead in hours
    train_fraction     chronological training share
    model_family       feedforward | recurrent (nodal forecasters)
    hidden_sizes       comma-separated layer sizes overriding the family default
    epochs             training epochs overriding the family default
    learning_rate      SGD step overriding the family default
    epsilons           comma-separated attack budgets in degrees for the sweep
    attack_epsilon     budget in degrees used by the day simulations
    attack_norm        linf | l1 | l2
    attack_mode        projection | barrier
    attack_iterations  sign-gradient steps per window
    attack_delta       finite-difference step (scaled units)
    attack_beta        barrier weight
    query_budget       per-window query budget for black-box attacks
    attacker           whitebox | blackbox | transfer (day simulations)
    n_adv              number of compromised nodal forecasts
    eval_days          number of test days to simulate
    strategies         comma-separated subset of best_first, random
    uc_relative_gap    relative optimality gap for the day-ahead commitment
    uc_node_limit      branch-and-bound node limit
"""
from django import forms

from .conf import app_settings


class BusForm(forms.Form):
    id = forms.IntegerField()
    reference = forms.BooleanField(required=False)


class LineForm(forms.Form):
    name = forms.CharField(required=False)
    from_bus = forms.IntegerField()
    to_bus = forms.IntegerField()
    susceptance = forms.FloatField()
    f_min = forms.FloatField(required=False)
    f_max = forms.FloatField(required=False)

    def clean(self):
        cleaned = super().clean()
        if self.errors:
            return cleaned
        if cleaned["from_bus"] == cleaned["to_bus"]:
            raise forms.ValidationError("line endpoints must differ")
        if cleaned["susceptance"] <= 0:
            self.add_error("susceptance", "susceptance must be positive")
        f_min, f_max = cleaned.get("f_min"), cleaned.get("f_max")
        if (f_min is None) != (f_max is None):
            raise forms.ValidationError("give both flow limits or neither")
        if f_min is not None and not f_min <= 0 <= f_max:
            raise forms.ValidationError("flow limits must satisfy f_min <= 0 <= f_max")
        return cleaned


class GeneratorForm(forms.Form):
    name = forms.CharField()
    bus = forms.IntegerField()
    p_min = forms.FloatField(min_value=0)
    p_max = forms.FloatField(min_value=0)
    marginal_cost = forms.FloatField(min_value=0)
    no_load_cost = forms.FloatField(min_value=0, required=False)
    startup_cost = forms.FloatField(min_value=0, required=False)
    shutdown_cost = forms.FloatField(min_value=0, required=False)
    min_up = forms.IntegerField(min_value=1)
    min_down = forms.IntegerField(min_value=1)
    ramp_up = forms.FloatField()
    ramp_down = forms.FloatField()
    initial_on = forms.BooleanField(required=False)
    initial_hours = forms.IntegerField(min_value=1)
    initial_output = forms.FloatField(min_value=0, required=False)

    def clean(self):
        cleaned = super().clean()
        if self.errors:
            return cleaned
        if cleaned["p_min"] > cleaned["p_max"]:
            raise forms.ValidationError("p_min must not exceed p_max")
        for key in ("ramp_up", "ramp_down"):
            if cleaned[key] <= 0:
                self.add_error(key, "ramp limits must be positive")
        for key in ("no_load_cost", "startup_cost", "shutdown_cost", "initial_output"):
            if cleaned.get(key) is None:
                cleaned[key] = 0.0
        output = cleaned["initial_output"]
        if cleaned["initial_on"] and not cleaned["p_min"] <= output <= cleaned["p_max"]:
            self.add_error("initial_output", "an online unit must start within [p_min, p_max]")
        if not cleaned["initial_on"] and output != 0:
            self.add_error("initial_output", "an offline unit must start at 0 MW")
        return cleaned


class LoadForm(forms.Form):
    bus = forms.IntegerField()
    share = forms.FloatField()


class CaseForm(forms.Form):
    version = forms.IntegerField(min_value=1, max_value=1)
    name = forms.CharField()
    base_mva = forms.FloatField()
    reserve_fraction = forms.FloatField(min_value=0, required=False)
    voll = forms.FloatField(required=False)
    uc_flow_margin = forms.FloatField(min_value=0, max_value=0.5, required=False)
    network_model = forms.ChoiceField(choices=[("btheta", "B-theta"), ("transport", "Transport")], required=False)

    def clean(self):
        cleaned = super().clean()
        if self.errors:
            return cleaned
        if cleaned["base_mva"] <= 0:
            self.add_error("base_mva", "base_mva must be positive")
        defaults = {"reserve_fraction": 0.03, "voll": 10000.0, "uc_flow_margin": 0.0, "network_model": "btheta"}
        for key, value in defaults.items():
            if cleaned.get(key) in (None, ""):
                cleaned[key] = value
        if cleaned["voll"] <= 0:
            self.add_error("voll", "value of lost load must be positive")
        return cleaned


def _int_list(value):
    try:
        items = [int(part) for part in str(value).split(",") if part.strip()]
    except ValueError:
        raise forms.ValidationError("expected a comma-separated list of integers")
    if not items or min(items) < 1:
        raise forms.ValidationError("expected positive integers")
    return items


def _float_list(value):
    try:
        items = [float(part) for part in str(value).split(",") if part.strip()]
    except ValueError:
        raise forms.ValidationError("expected a comma-separated list of numbers")
    if not items or min(items) < 0:
        raise forms.ValidationError("expected non-negative numbers")
    return items


class ExperimentConfigForm(forms.Form):
    case = forms.CharField(required=False)
    seed = forms.IntegerField(min_value=0, required=False)
    days = forms.IntegerField(min_value=2, required=False)
    stations = forms.IntegerField(min_value=1, required=False)
    noise = forms.FloatField(min_value=0, max_value=0.2, required=False)
    base_load_mw = forms.FloatField(min_value=1, required=False)
    history_hours = forms.IntegerField(min_value=0, required=False)
    horizon_hours = forms.IntegerField(min_value=1, required=False)
    train_fraction = forms.FloatField(min_value=0.05, max_value=0.95, required=False)
    model_family = forms.ChoiceField(choices=[("feedforward", "Feedforward"), ("recurrent", "Recurrent")], required=False)
    hidden_sizes = forms.CharField(required=False)
    epochs = forms.IntegerField(min_value=1, required=False)
    learning_rate = forms.FloatField(min_value=0, required=False)
    epsilons = forms.CharField(required=False)
    attack_epsilon = forms.FloatField(min_value=0, required=False)
    attack_norm = forms.ChoiceField(choices=[("linf", "Linf"), ("l1", "L1"), ("l2", "L2")], required=False)
    attack_mode = forms.ChoiceField(choices=[("projection", "Projection"), ("barrier", "Barrier")], required=False)
    attack_iterations = forms.IntegerField(min_value=1, required=False)
    attack_delta = forms.FloatField(min_value=1e-9, required=False)
    attack_beta = forms.FloatField(min_value=1e-9, required=False)
    query_budget = forms.IntegerField(min_value=1, required=False)
    attacker = forms.ChoiceField(
        choices=[("whitebox", "White box"), ("blackbox", "Black box"), ("transfer", "Transfer")], required=False
    )
    n_adv = forms.IntegerField(min_value=1, required=False)
    eval_days = forms.IntegerField(min_value=1, required=False)
    strategies = forms.CharField(required=False)
    uc_relative_gap = forms.FloatField(min_value=0, required=False)
    uc_node_limit = forms.IntegerField(min_value=1, required=False)

    def clean_hidden_sizes(self):
        value = self.cleaned_data["hidden_sizes"]
        return _int_list(value) if value else None

    def clean_epsilons(self):
        value = self.cleaned_data["epsilons"]
        return _float_list(value) if value else None

    def clean_strategies(self):
        value = self.cleaned_data["strategies"]
        if not value:
            return None
        items = [part.strip() for part in value.split(",") if part.strip()]
        unknown = sorted(set(items) - {"best_first", "random"})
        if unknown:
            raise forms.ValidationError(f"unknown strategies: {', '.join(unknown)}")
        return items

    def experiment_values(self):
        """Cleaned values with defaults filled in from the FORECASTATTACK settings."""
        conf = app_settings()
        attack = conf["ATTACK"]
        defaults = {
            "case": str(conf["DEFAULT_CASE"]),
            "seed": 7,
            "days": 180,
            "stations": 3,
            "noise": 0.01,
            "base_load_mw": None,
            "history_hours": conf["HISTORY_HOURS"],
            "horizon_hours": conf["HORIZON_HOURS"],
            "train_fraction": conf["TRAIN_FRACTION"],
            "model_family": "recurrent",
            "hidden_sizes": None,
            "epochs": None,
            "learning_rate": None,
            "epsilons": [1.0, 2.0, 3.0, 4.0, 5.0],
            "attack_epsilon": 5.0,
            "attack_norm": attack["norm"],
            "attack_mode": attack["mode"],
            "attack_iterations": attack["iterations"],
            "attack_delta": attack["delta"],
            "attack_beta": attack["beta"],
            "query_budget": None,
            "attacker": "blackbox",
            "n_adv": 3,
            "eval_days": 30,
            "strategies": ["best_first", "random"],
            "uc_relative_gap": conf["UC_RELATIVE_GAP"],
            "uc_node_limit": conf["UC_NODE_LIMIT"],
        }
        values = dict(defaults)
        for key, value in self.cleaned_data.items():
            if value not in (None, ""):
                values[key] = value
        return values
