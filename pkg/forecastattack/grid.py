"""Grid cases: parsing and validation, and DC power-flow constraint construction.

Case files are JSON documents (``version`` 1). Powers are MW, costs are $ or
$/MWh, susceptances are per unit on ``base_mva``. A line flow is
``susceptance * (theta_from - theta_to) * base_mva`` MW with angles in radians,
positive from ``from_bus`` to ``to_bus``. Lines with null limits are
unmonitored: they carry flow but have no limit.
"""
import json
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import BadShares, DisconnectedGraph, InsufficientCapacity, NoReferenceBus, SchemaError
from .forms import BusForm, CaseForm, GeneratorForm, LineForm, LoadForm

logger = logging.getLogger(__name__)

SHARE_TOLERANCE = 1e-6
ANGLE_BOUND = np.pi


@dataclass(frozen=True)
class Bus:
    id: int
    is_reference: bool = False


@dataclass(frozen=True)
class Line:
    name: str
    from_bus: int
    to_bus: int
    susceptance: float
    f_min: float = -np.inf
    f_max: float = np.inf

    @property
    def monitored(self):
        return np.isfinite(self.f_min) or np.isfinite(self.f_max)

    def reversed(self):
        return replace(self, from_bus=self.to_bus, to_bus=self.from_bus, f_min=-self.f_max, f_max=-self.f_min)

    def to_dict(self):
        monitored = self.monitored
        return {
            "name": self.name,
            "from_bus": self.from_bus,
            "to_bus": self.to_bus,
            "susceptance": self.susceptance,
            "f_min": self.f_min if monitored else None,
            "f_max": self.f_max if monitored else None,
        }


@dataclass(frozen=True)
class Generator:
    name: str
    bus: int
    p_min: float
    p_max: float
    marginal_cost: float
    no_load_cost: float
    startup_cost: float
    shutdown_cost: float
    min_up: int
    min_down: int
    ramp_up: float
    ramp_down: float
    initial_on: bool
    initial_hours: int
    initial_output: float

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class GridCase:
    name: str
    base_mva: float
    buses: tuple
    lines: tuple
    generators: tuple
    shares: tuple
    reserve_fraction: float = 0.03
    voll: float = 10000.0
    uc_flow_margin: float = 0.0
    network_model: str = "btheta"
    version: int = 1
    _bus_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_bus_index", {bus.id: i for i, bus in enumerate(self.buses)})

    @property
    def bus_ids(self):
        return [bus.id for bus in self.buses]

    def bus_index(self, bus_id):
        return self._bus_index[bus_id]

    @property
    def reference_bus(self):
        return next(bus.id for bus in self.buses if bus.is_reference)

    @property
    def load_buses(self):
        return [bus for bus, share in self.shares if share > 0]

    @property
    def share_map(self):
        return dict(self.shares)

    @property
    def total_capacity(self):
        return float(sum(g.p_max for g in self.generators))

    @property
    def monitored_lines(self):
        return [line for line in self.lines if line.monitored]

    def generators_at(self, bus_id):
        return [i for i, g in enumerate(self.generators) if g.bus == bus_id]

    def lines_at(self, bus_id):
        return [i for i, line in enumerate(self.lines) if bus_id in (line.from_bus, line.to_bus)]

    def line(self, name):
        for line in self.lines:
            if line.name == name:
                return line
        raise KeyError(name)

    def nodal_loads(self, aggregate):
        """Split an aggregate series (T,) into bus loads (T, n_buses) by share."""
        aggregate = np.asarray(aggregate, dtype=np.float64)
        loads = np.zeros((aggregate.size, len(self.buses)))
        for bus, share in self.shares:
            loads[:, self.bus_index(bus)] = share * aggregate
        return loads

    def bus_loads(self, per_load_bus):
        """Assemble (T, n_buses) loads from a {bus id: (T,) series} mapping."""
        series = {bus: np.asarray(values, dtype=np.float64) for bus, values in per_load_bus.items()}
        hours = len(next(iter(series.values())))
        loads = np.zeros((hours, len(self.buses)))
        for bus, values in series.items():
            loads[:, self.bus_index(bus)] = values
        return loads

    def check_capacity(self, peak_load):
        capacity = self.total_capacity
        if capacity < peak_load:
            raise InsufficientCapacity(
                f"total capacity {capacity:.0f} MW is below peak load {peak_load:.0f} MW",
                capacity=capacity,
                peak=float(peak_load),
            )
        if capacity < 1.5 * peak_load:
            logger.warning("Case %s: capacity %.0f MW is below 1.5x the %.0f MW peak", self.name, capacity, peak_load)
        return capacity / peak_load

    def reversed_line(self, name):
        lines = tuple(line.reversed() if line.name == name else line for line in self.lines)
        return replace(self, lines=lines)

    def to_dict(self):
        return {
            "version": self.version,
            "name": self.name,
            "base_mva": self.base_mva,
            "reserve_fraction": self.reserve_fraction,
            "voll": self.voll,
            "uc_flow_margin": self.uc_flow_margin,
            "network_model": self.network_model,
            "buses": [{"id": bus.id, "reference": bus.is_reference} for bus in self.buses],
            "lines": [line.to_dict() for line in self.lines],
            "generators": [g.to_dict() for g in self.generators],
            "loads": [{"bus": bus, "share": share} for bus, share in self.shares],
        }


def _validated(form_class, data, path):
    if not isinstance(data, dict):
        raise SchemaError(f"{path} must be an object", path=path)
    form = form_class(data=data)
    if not form.is_valid():
        errors = form.errors.get_json_data()
        summary = "; ".join(f"{key}: {item['message']}" for key, items in errors.items() for item in items)
        raise SchemaError(f"{path}: {summary}", path=path, errors=errors)
    return form.cleaned_data


def _section(payload, key):
    items = payload.get(key)
    if not isinstance(items, list) or not items:
        raise SchemaError(f"case needs a non-empty '{key}' list", path=key)
    return items


def _check_connected(bus_ids, lines):
    neighbours = {bus: set() for bus in bus_ids}
    for line in lines:
        neighbours[line.from_bus].add(line.to_bus)
        neighbours[line.to_bus].add(line.from_bus)
    start = bus_ids[0]
    seen = {start}
    queue = deque([start])
    while queue:
        for nxt in neighbours[queue.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    missing = sorted(set(bus_ids) - seen)
    if missing:
        raise DisconnectedGraph(f"buses {missing} are not connected to bus {start}", buses=missing)


def case_from_dict(payload):
    if not isinstance(payload, dict):
        raise SchemaError("case document must be a JSON object", path="")
    header = _validated(CaseForm, payload, "case")

    buses = []
    for i, item in enumerate(_section(payload, "buses")):
        data = _validated(BusForm, item, f"buses[{i}]")
        buses.append(Bus(data["id"], bool(data["reference"])))
    bus_ids = [bus.id for bus in buses]
    if len(set(bus_ids)) != len(bus_ids):
        raise SchemaError("bus ids must be unique", path="buses")
    references = [bus.id for bus in buses if bus.is_reference]
    if not references:
        raise NoReferenceBus("case has no reference bus")
    if len(references) > 1:
        raise SchemaError(f"case has {len(references)} reference buses", path="buses", references=references)
    known = set(bus_ids)

    lines = []
    for i, item in enumerate(payload.get("lines") or []):
        data = _validated(LineForm, item, f"lines[{i}]")
        for end in ("from_bus", "to_bus"):
            if data[end] not in known:
                raise SchemaError(f"lines[{i}].{end} refers to unknown bus {data[end]}", path=f"lines[{i}]")
        monitored = data["f_min"] is not None
        lines.append(
            Line(
                name=data["name"] or f"{data['from_bus']}-{data['to_bus']}",
                from_bus=data["from_bus"],
                to_bus=data["to_bus"],
                susceptance=data["susceptance"],
                f_min=data["f_min"] if monitored else -np.inf,
                f_max=data["f_max"] if monitored else np.inf,
            )
        )
    if len({line.name for line in lines}) != len(lines):
        raise SchemaError("line names must be unique", path="lines")

    generators = []
    for i, item in enumerate(_section(payload, "generators")):
        data = _validated(GeneratorForm, item, f"generators[{i}]")
        if data["bus"] not in known:
            raise SchemaError(f"generators[{i}].bus refers to unknown bus {data['bus']}", path=f"generators[{i}]")
        generators.append(Generator(**{key: data[key] for key in Generator.__dataclass_fields__}))
    if len({g.name for g in generators}) != len(generators):
        raise SchemaError("generator names must be unique", path="generators")

    shares = {}
    for i, item in enumerate(_section(payload, "loads")):
        data = _validated(LoadForm, item, f"loads[{i}]")
        if data["bus"] not in known:
            raise SchemaError(f"loads[{i}].bus refers to unknown bus {data['bus']}", path=f"loads[{i}]")
        if data["bus"] in shares:
            raise SchemaError(f"bus {data['bus']} has two load entries", path=f"loads[{i}]")
        shares[data["bus"]] = data["share"]
    if any(share < 0 for share in shares.values()):
        raise BadShares("load shares must be non-negative", shares=shares)
    total = sum(shares.values())
    if abs(total - 1.0) > SHARE_TOLERANCE:
        raise BadShares(f"load shares sum to {total:.6f}, not 1", total=total)

    if len(buses) > 1:
        _check_connected(bus_ids, lines)

    return GridCase(
        name=header["name"],
        base_mva=header["base_mva"],
        buses=tuple(buses),
        lines=tuple(lines),
        generators=tuple(generators),
        shares=tuple(sorted(shares.items())),
        reserve_fraction=header["reserve_fraction"],
        voll=header["voll"],
        uc_flow_margin=header["uc_flow_margin"],
        network_model=header["network_model"],
        version=header["version"],
    )


def parse_case(path):
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except OSError as exc:
        raise SchemaError(f"cannot read case file: {exc}", path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"case file is not valid JSON: {exc}", path=str(path)) from exc
    case = case_from_dict(payload)
    logger.debug(
        "Parsed case %s from %s: %d buses, %d lines, %d generators",
        case.name,
        Path(path).name,
        len(case.buses),
        len(case.lines),
        len(case.generators),
    )
    return case


@dataclass
class NetworkBlock:
    """Variable indices created by ``dc_constraints`` (one row per hour)."""

    theta: np.ndarray
    flows: dict
    line_terms: dict = field(repr=False)

    def flow_values(self, x, case):
        """Line flows (T, n_lines) in MW from a solution vector."""
        hours = self.theta.shape[0]
        values = np.zeros((hours, len(case.lines)))
        for l, line in enumerate(case.lines):
            for t in range(hours):
                values[t, l] = sum(coef * x[j] for j, coef in self.line_terms[l][t])
        return values


def dc_constraints(builder, case, injections, loads, limit_scale=1.0, network_model=None):
    """Add DC network variables and rows to ``builder``.

    ``injections[t][bus]`` lists ``(variable index, coefficient)`` terms of
    power entering ``bus`` in hour ``t`` (generation, shed load, negative
    curtailment); ``loads`` is (T, n_buses) MW. Per hour this adds:

    * an angle per bus within +-pi rad (the reference angle fixed at 0) under ``btheta``;
    * a flow variable per monitored line with limits ``limit_scale * [f_min, f_max]``
      and, under ``btheta``, the row ``f = b (theta_from - theta_to) base``;
      under ``transport`` every line gets a flow variable and no angles exist;
    * nodal balance ``injections - load = outgoing flow - incoming flow``.
    """
    model = network_model or case.network_model
    loads = np.asarray(loads, dtype=np.float64)
    hours = loads.shape[0]
    n_bus = len(case.buses)
    reference = case.bus_index(case.reference_bus)
    theta = np.full((hours, n_bus), -1, dtype=np.int64)
    if model == "btheta":
        theta = builder.add_variables("theta", (hours, n_bus), lower=-ANGLE_BOUND, upper=ANGLE_BOUND)
        for t in range(hours):
            builder.set_bounds(theta[t, reference], lower=0.0, upper=0.0)

    flows = {}
    line_terms = {}
    for l, line in enumerate(case.lines):
        k = line.susceptance * case.base_mva
        f_index = None
        if line.monitored or model == "transport":
            lower = line.f_min * limit_scale if line.monitored else -np.inf
            upper = line.f_max * limit_scale if line.monitored else np.inf
            f_index = builder.add_variables(f"flow_{line.name}", hours, lower=lower, upper=upper)
            flows[line.name] = f_index
        terms = []
        for t in range(hours):
            if f_index is not None:
                terms.append([(f_index[t], 1.0)])
                if model == "btheta":
                    i, j = case.bus_index(line.from_bus), case.bus_index(line.to_bus)
                    builder.add_eq(
                        [(f_index[t], 1.0), (theta[t, i], -k), (theta[t, j], k)], 0.0, name=f"flowdef_{line.name}_{t}"
                    )
            else:
                i, j = case.bus_index(line.from_bus), case.bus_index(line.to_bus)
                terms.append([(theta[t, i], k), (theta[t, j], -k)])
        line_terms[l] = terms

    for t in range(hours):
        for b, bus in enumerate(case.buses):
            row = list(injections[t].get(bus.id, []))
            for l, line in enumerate(case.lines):
                if line.from_bus == bus.id:
                    row.extend((j, -coef) for j, coef in line_terms[l][t])
                elif line.to_bus == bus.id:
                    row.extend(line_terms[l][t])
            builder.add_eq(row, loads[t, b], name=f"balance_{bus.id}_{t}")
    return NetworkBlock(theta, flows, line_terms)
