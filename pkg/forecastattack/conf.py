"""Access to the ``FORECASTATTACK`` settings block with built-in fallbacks."""
import copy
from pathlib import Path

from django.conf import settings

CASES_DIR = Path(__file__).resolve().parent / "cases"

DEFAULTS = {
    "DEFAULT_CASE": CASES_DIR / "stressed14.json",
    "SMOKE_CASE": CASES_DIR / "two_bus.json",
    "HISTORY_HOURS": 23,
    "HORIZON_HOURS": 1,
    "TRAIN_FRACTION": 0.8,
    "MODELS": {
        "feedforward": {
            "hidden_sizes": [512, 128, 32],
            "activation": "relu",
            "epochs": 20,
            "learning_rate": 0.02,
            "batch_size": 32,
        },
        "recurrent": {
            "hidden_sizes": [64, 32],
            "activation": "tanh",
            "epochs": 30,
            "learning_rate": 0.05,
            "batch_size": 32,
        },
    },
    "ATTACK": {
        "norm": "linf",
        "iterations": 10,
        "delta": 1e-3,
        "beta": 0.01,
        "mode": "projection",
    },
    "UC_RELATIVE_GAP": 1e-4,
    "UC_NODE_LIMIT": 5000,
}


def _merge(base, override):
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def app_settings():
    """Return the merged settings dictionary (a fresh copy on every call)."""
    return _merge(DEFAULTS, getattr(settings, "FORECASTATTACK", {}))
