"""Small hand-built cases, windows and models shared by the test modules."""
import numpy as np

from ..dataio import Dataset, FeatureLayout, FeatureWindow, ScalingParams, hours_since_epoch
from ..grid import case_from_dict
from ..neuralnet import ForecastModel, ModelConfig

START = hours_since_epoch("2016-01-04T00:00")


def generator(name, bus=1, **overrides):
    values = {
        "name": name,
        "bus": bus,
        "p_min": 0.0,
        "p_max": 100.0,
        "marginal_cost": 10.0,
        "no_load_cost": 0.0,
        "startup_cost": 0.0,
        "shutdown_cost": 0.0,
        "min_up": 1,
        "min_down": 1,
        "ramp_up": 1000.0,
        "ramp_down": 1000.0,
        "initial_on": True,
        "initial_hours": 1,
        "initial_output": 0.0,
    }
    values.update(overrides)
    return values


def line(from_bus, to_bus, limit=None, susceptance=10.0):
    return {
        "name": f"{from_bus}-{to_bus}",
        "from_bus": from_bus,
        "to_bus": to_bus,
        "susceptance": susceptance,
        "f_min": -limit if limit is not None else None,
        "f_max": limit,
    }


def case_payload(buses, lines, generators, loads, **header):
    payload = {
        "version": 1,
        "name": header.pop("name", "test"),
        "base_mva": 100.0,
        "reserve_fraction": 0.03,
        "voll": 10000.0,
        "buses": [{"id": bus, "reference": k == 0} for k, bus in enumerate(buses)],
        "lines": lines,
        "generators": generators,
        "loads": [{"bus": bus, "share": share} for bus, share in loads],
    }
    payload.update(header)
    return payload


def single_bus_case(*generators, **header):
    return case_from_dict(case_payload([1], [], list(generators), [(1, 1.0)], **header))


def triangle_case(limit=1000.0, generators=None, loads=((3, 1.0),)):
    lines = [line(1, 2, limit), line(2, 3, limit), line(1, 3, limit)]
    return case_from_dict(case_payload([1, 2, 3], lines, generators or [generator("G1", p_max=500.0)], list(loads)))


def peaker_case():
    """Two load buses fed from bus 1 by a 300 MW base unit and a 100 MW peaker."""
    generators = [
        generator("BASE", p_max=300.0, marginal_cost=10.0, ramp_up=300.0, ramp_down=300.0, initial_output=140.0),
        generator("PEAK", p_max=100.0, marginal_cost=50.0, startup_cost=100.0, ramp_up=100.0, ramp_down=100.0,
                  initial_on=False),
    ]
    lines = [line(1, 2), line(1, 3)]
    return case_from_dict(case_payload([1, 2, 3], lines, generators, [(2, 0.5), (3, 0.5)], name="peaker"))


def scaling(n_stations=2, load=(0.0, 400.0), temperature=(40.0, 60.0)):
    features = ("load",) + tuple(f"temp_{s}" for s in range(n_stations))
    lows = (load[0],) + (temperature[0],) * n_stations
    highs = (load[1],) + (temperature[1],) * n_stations
    return ScalingParams(features, lows, highs)


def window(params, history=2, target_hour=START + 48, fill=0.5):
    """A window whose load and temperature columns all sit at ``fill`` (scaled)."""
    layout = FeatureLayout(params.n_stations)
    rows = history + 1
    hours = np.arange(target_hour - history, target_hour + 1)
    values = layout.encode(np.full(rows, fill), np.full((rows, params.n_stations), fill), hours, np.zeros(rows))
    values.setflags(write=False)
    return FeatureWindow(
        values, fill, layout.temperature_mask(rows), layout.spans(params), hours, int(target_hour), layout
    )


def windows(params, count, history=2, first_hour=START + 48):
    return [window(params, history, first_hour + i) for i in range(count)]


def linear_model(params, history=2, temp_weight=0.1, load_weight=0.0, bias=0.05):
    """Forecast = bias + load_weight * sum(load column) + temp_weight * sum(temperature columns)."""
    layout = FeatureLayout(params.n_stations)
    shape = (history + 1, layout.width)
    weights = np.zeros(shape)
    weights[:, layout.load] = load_weight
    weights[:, layout.temperatures] = temp_weight
    config = ModelConfig("feedforward", (1,), shape, activation="linear", output="linear")
    parameters = {
        "W0": weights.reshape(-1, 1),
        "b0": np.array([bias]),
        "W1": np.ones((1, 1)),
        "b1": np.zeros(1),
    }
    return ForecastModel(config, parameters, params)


def dataset(hours, n_stations=2, start=START, seed=0):
    rng = np.random.default_rng(seed)
    stamps = start + np.arange(hours)
    temperatures = 50.0 + 10.0 * rng.random((hours, n_stations))
    load = 100.0 + temperatures.mean(axis=1) + 10.0 * np.sin(np.arange(hours) / 24.0 * 2 * np.pi)
    return Dataset(stamps, load, temperatures, rng.integers(0, 3, size=hours))
