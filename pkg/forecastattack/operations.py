"""Day-ahead unit commitment and real-time economic dispatch.

The day runs in two stages. ``solve_uc`` commits units on forecast loads,
then ``run_day`` dispatches the committed set hour by hour against the
actual loads, chaining ramp limits from the previous hour's realized output.
Demand the committed units cannot serve is shed at the value of lost load.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import tolerances as tol
from .exceptions import InstanceError, UCInfeasible
from .grid import dc_constraints
from .milp import BnBConfig, LPBuilder, Status, solve_lp, solve_milp

logger = logging.getLogger(__name__)

HOURS_PER_DAY = 24
SHED_CAUSES = ("generation_limit", "ramp", "line_flow")
BINDING_TOLERANCE = 1e-6


def _as_loads(case, loads, hours=None):
    loads = np.asarray(loads, dtype=np.float64)
    if loads.ndim == 1:
        loads = loads.reshape(1, -1)
    if loads.ndim != 2 or loads.shape[1] != len(case.buses):
        raise InstanceError(
            f"loads must have shape (hours, {len(case.buses)}), got {loads.shape}", shape=list(loads.shape)
        )
    if hours is not None and loads.shape[0] != hours:
        raise InstanceError(f"expected {hours} hours of load, got {loads.shape[0]}", hours=loads.shape[0])
    if not np.all(np.isfinite(loads)) or np.any(loads < 0):
        raise InstanceError("loads must be finite and non-negative")
    return loads


@dataclass(frozen=True, eq=False)
class UCInstance:
    case: object
    loads: np.ndarray
    reserve_fraction: float = None
    horizon: int = HOURS_PER_DAY

    def __post_init__(self):
        loads = _as_loads(self.case, self.loads, self.horizon)
        object.__setattr__(self, "loads", loads)
        if self.reserve_fraction is None:
            object.__setattr__(self, "reserve_fraction", self.case.reserve_fraction)
        if self.reserve_fraction < 0:
            raise InstanceError("reserve fraction must be non-negative", reserve=self.reserve_fraction)


@dataclass
class UCFormulation:
    """The commitment MILP plus the variable blocks needed to read a solution back."""

    mip: object
    p: np.ndarray
    u: np.ndarray
    z: np.ndarray
    y: np.ndarray
    network: object


def _initial_obligations(gen, horizon):
    """Hours at the start of the day whose status is fixed by the initial state."""
    if gen.initial_on:
        return 1.0, max(0, min(horizon, gen.min_up - gen.initial_hours))
    return 0.0, max(0, min(horizon, gen.min_down - gen.initial_hours))


def build_uc(inst):
    case = inst.case
    hours = inst.loads.shape[0]
    gens = case.generators
    n_gen = len(gens)
    b = LPBuilder()
    p_max = np.array([g.p_max for g in gens])
    p = b.add_variables("p", (n_gen, hours), upper=np.repeat(p_max[:, None], hours, axis=1),
                        cost=np.repeat(np.array([g.marginal_cost for g in gens])[:, None], hours, axis=1))
    u = b.add_variables("u", (n_gen, hours), upper=1.0, binary=True,
                        cost=np.repeat(np.array([g.no_load_cost for g in gens])[:, None], hours, axis=1))
    z = b.add_variables("z", (n_gen, hours), upper=1.0, binary=True,
                        cost=np.repeat(np.array([g.startup_cost for g in gens])[:, None], hours, axis=1))
    y = b.add_variables("y", (n_gen, hours), upper=1.0, binary=True,
                        cost=np.repeat(np.array([g.shutdown_cost for g in gens])[:, None], hours, axis=1))

    for i, gen in enumerate(gens):
        status, fixed_hours = _initial_obligations(gen, hours)
        for t in range(fixed_hours):
            b.set_bounds(u[i, t], lower=status, upper=status)
        initial_u = 1.0 if gen.initial_on else 0.0
        for t in range(hours):
            b.add_le([(p[i, t], 1.0), (u[i, t], -gen.p_max)], 0.0, name=f"pmax_{gen.name}_{t}")
            b.add_le([(u[i, t], gen.p_min), (p[i, t], -1.0)], 0.0, name=f"pmin_{gen.name}_{t}")
            if t == 0:
                b.add_eq([(u[i, 0], 1.0), (z[i, 0], -1.0), (y[i, 0], 1.0)], initial_u, name=f"logic_{gen.name}_0")
                b.add_le([(p[i, 0], 1.0)], gen.initial_output + gen.ramp_up, name=f"rampup_{gen.name}_0")
                b.add_le([(p[i, 0], -1.0)], gen.ramp_down - gen.initial_output, name=f"rampdn_{gen.name}_0")
            else:
                b.add_eq([(u[i, t], 1.0), (u[i, t - 1], -1.0), (z[i, t], -1.0), (y[i, t], 1.0)], 0.0,
                         name=f"logic_{gen.name}_{t}")
                b.add_le([(p[i, t], 1.0), (p[i, t - 1], -1.0)], gen.ramp_up, name=f"rampup_{gen.name}_{t}")
                b.add_le([(p[i, t - 1], 1.0), (p[i, t], -1.0)], gen.ramp_down, name=f"rampdn_{gen.name}_{t}")
            b.add_le([(z[i, t], 1.0), (y[i, t], 1.0)], 1.0, name=f"startstop_{gen.name}_{t}")
            window = range(max(0, t - gen.min_up + 1), t + 1)
            b.add_le([(z[i, s], 1.0) for s in window] + [(u[i, t], -1.0)], 0.0, name=f"minup_{gen.name}_{t}")
            window = range(max(0, t - gen.min_down + 1), t + 1)
            b.add_le([(y[i, s], 1.0) for s in window] + [(u[i, t], 1.0)], 1.0, name=f"mindn_{gen.name}_{t}")

    demand = inst.loads.sum(axis=1)
    for t in range(hours):
        b.add_ge([(u[i, t], gens[i].p_max) for i in range(n_gen)], (1.0 + inst.reserve_fraction) * demand[t],
                 name=f"reserve_{t}")

    injections = [{} for _ in range(hours)]
    for i, gen in enumerate(gens):
        for t in range(hours):
            injections[t].setdefault(gen.bus, []).append((p[i, t], 1.0))
    network = dc_constraints(b, case, injections, inst.loads, limit_scale=1.0 - case.uc_flow_margin)
    logger.debug("UC model: %d variables, %d binaries, %d rows", b.n, len(b.binaries),
                 len(b.row_names["eq"]) + len(b.row_names["ub"]))
    return UCFormulation(b.build_mip(), p, u, z, y, network)


@dataclass
class CommitmentSchedule:
    u: np.ndarray
    z: np.ndarray
    y: np.ndarray
    p: np.ndarray
    flows: np.ndarray
    dispatch_cost: float
    transition_cost: float
    status: str = "optimal"
    nodes: int = 0

    @property
    def planned_cost(self):
        return self.dispatch_cost + self.transition_cost

    @property
    def hours(self):
        return self.u.shape[1]

    def committed(self, t):
        return np.flatnonzero(self.u[:, t] == 1)

    def unit_hours(self):
        return int(self.u.sum())

    def difference(self, other):
        """Number of generator-hours whose commitment differs from ``other``."""
        return int(np.sum(self.u != other.u))

    def same_as(self, other):
        return self.difference(other) == 0

    def to_dict(self, case=None):
        names = [g.name for g in case.generators] if case is not None else list(range(self.u.shape[0]))
        return {
            "status": self.status,
            "nodes": self.nodes,
            "planned_cost": self.planned_cost,
            "dispatch_cost": self.dispatch_cost,
            "transition_cost": self.transition_cost,
            "commitment": {str(name): self.u[i].astype(int).tolist() for i, name in enumerate(names)},
            "dispatch": {str(name): self.p[i].round(6).tolist() for i, name in enumerate(names)},
        }


def transition_cost(case, z, y):
    starts = np.array([g.startup_cost for g in case.generators])
    stops = np.array([g.shutdown_cost for g in case.generators])
    return float(starts @ z.sum(axis=1) + stops @ y.sum(axis=1))


def schedule_from_commitment(case, u, p=None):
    """Build a schedule from a fixed commitment matrix; start/stop flags follow from the initial state."""
    u = np.asarray(np.round(u), dtype=np.int64)
    initial = np.array([1 if g.initial_on else 0 for g in case.generators])
    previous = np.concatenate([initial[:, None], u[:, :-1]], axis=1)
    z = (u - previous > 0).astype(np.int64)
    y = (previous - u > 0).astype(np.int64)
    p = np.zeros(u.shape) if p is None else np.asarray(p, dtype=np.float64)
    return CommitmentSchedule(u, z, y, p, np.zeros((u.shape[1], len(case.lines))), 0.0, transition_cost(case, z, y))


def solve_uc(inst, cfg=None):
    conf = cfg or BnBConfig()
    case = inst.case
    formulation = build_uc(inst)
    solution = solve_milp(formulation.mip, conf)
    if solution.status in (Status.INFEASIBLE, Status.UNBOUNDED):
        raise UCInfeasible(
            f"unit commitment for case {case.name} is {solution.status.value}",
            peak=float(inst.loads.sum(axis=1).max()),
            capacity=case.total_capacity,
        )
    x = solution.x
    u = np.round(x[formulation.u]).astype(np.int64)
    z = np.round(x[formulation.z]).astype(np.int64)
    y = np.round(x[formulation.y]).astype(np.int64)
    p = x[formulation.p]
    marginal = np.array([g.marginal_cost for g in case.generators])
    no_load = np.array([g.no_load_cost for g in case.generators])
    dispatch = float(marginal @ p.sum(axis=1) + no_load @ u.sum(axis=1))
    schedule = CommitmentSchedule(
        u, z, y, p,
        formulation.network.flow_values(x, case),
        dispatch,
        transition_cost(case, z, y),
        status=solution.status.value,
        nodes=solution.nodes,
    )
    logger.info("UC %s: %d unit-hours committed, planned cost %.2f (%s, %d nodes)",
                case.name, schedule.unit_hours(), schedule.planned_cost, schedule.status, schedule.nodes)
    return schedule


@dataclass(frozen=True, eq=False)
class EDInstance:
    case: object
    hour: int
    loads: np.ndarray
    committed: np.ndarray
    previous_output: np.ndarray
    allow_shedding: bool = True

    def __post_init__(self):
        n_gen = len(self.case.generators)
        loads = np.asarray(self.loads, dtype=np.float64).reshape(-1)
        if loads.size != len(self.case.buses) or not np.all(np.isfinite(loads)) or np.any(loads < 0):
            raise InstanceError("hour loads must be finite, non-negative and one per bus", hour=self.hour)
        committed = np.asarray(self.committed).astype(bool).reshape(-1)
        previous = np.asarray(self.previous_output, dtype=np.float64).reshape(-1)
        if committed.size != n_gen or previous.size != n_gen:
            raise InstanceError("committed set and previous output need one entry per generator", hour=self.hour)
        object.__setattr__(self, "loads", loads)
        object.__setattr__(self, "committed", committed)
        object.__setattr__(self, "previous_output", previous)

    def output_bounds(self):
        """Per-generator (lower, upper) output bounds; zero for units not committed."""
        lower = np.zeros(len(self.case.generators))
        upper = np.zeros(len(self.case.generators))
        for i, gen in enumerate(self.case.generators):
            if not self.committed[i]:
                continue
            prev = self.previous_output[i]
            lo = max(gen.p_min, prev - gen.ramp_down)
            hi = min(gen.p_max, prev + gen.ramp_up)
            if lo > hi:
                logger.warning(
                    "Hour %d: %s cannot reach %.1f MW from %.1f MW; held at %.1f MW",
                    self.hour, gen.name, lo, prev, hi,
                )
                lo = hi
            lower[i], upper[i] = lo, hi
        return lower, upper


@dataclass
class DispatchResult:
    hour: int
    output: np.ndarray
    shed: np.ndarray
    curtailed: np.ndarray
    flows: np.ndarray
    dispatch_cost: float
    shed_cost: float
    curtailment_cost: float
    binding: dict = field(default_factory=dict)
    shed_cause: str = None

    @property
    def total_shed(self):
        return float(self.shed.sum())

    @property
    def total_cost(self):
        return self.dispatch_cost + self.shed_cost + self.curtailment_cost

    def to_dict(self, case):
        return {
            "hour": self.hour,
            "output": {g.name: round(float(self.output[i]), 6) for i, g in enumerate(case.generators)},
            "shed": {str(bus.id): round(float(self.shed[b]), 6) for b, bus in enumerate(case.buses) if self.shed[b] > 0},
            "curtailed": round(float(self.curtailed.sum()), 6),
            "flows": {line.name: round(float(self.flows[l]), 6) for l, line in enumerate(case.lines)},
            "dispatch_cost": self.dispatch_cost,
            "shed_cost": self.shed_cost,
            "curtailment_cost": self.curtailment_cost,
            "binding": self.binding,
            "shed_cause": self.shed_cause,
        }


def _ed_program(inst, lower, upper):
    case = inst.case
    b = LPBuilder()
    units = np.flatnonzero(inst.committed)
    p = {}
    for i in units:
        gen = case.generators[i]
        p[i] = b.add_variables(f"p_{gen.name}", 1, lower=lower[i], upper=upper[i], cost=gen.marginal_cost)[0]
    shed = {}
    spill = {}
    injections = {}
    for k, bus in enumerate(case.buses):
        terms = [(p[i], 1.0) for i in units if case.generators[i].bus == bus.id]
        if inst.loads[k] > 0:
            ceiling = inst.loads[k] if inst.allow_shedding else 0.0
            shed[k] = b.add_variables(f"shed_{bus.id}", 1, upper=ceiling, cost=case.voll)[0]
            terms.append((shed[k], 1.0))
        if any(case.generators[i].bus == bus.id for i in units):
            spill[k] = b.add_variables(f"spill_{bus.id}", 1, cost=case.voll)[0]
            terms.append((spill[k], -1.0))
        injections[bus.id] = terms
    network = dc_constraints(b, case, [injections], inst.loads[None, :], limit_scale=1.0)
    return b.build(), p, shed, spill, network


def _binding_elements(inst, output, flows, lower, upper):
    case = inst.case
    lines = []
    for l, line in enumerate(case.lines):
        if line.monitored and (flows[l] >= line.f_max - BINDING_TOLERANCE or flows[l] <= line.f_min + BINDING_TOLERANCE):
            lines.append(line.name)
    at_capacity = []
    ramp_bound = []
    for i, gen in enumerate(case.generators):
        if not inst.committed[i]:
            continue
        if output[i] >= gen.p_max - BINDING_TOLERANCE:
            at_capacity.append(gen.name)
        elif output[i] >= upper[i] - BINDING_TOLERANCE or (
            output[i] <= lower[i] + BINDING_TOLERANCE and lower[i] > gen.p_min + BINDING_TOLERANCE
        ):
            ramp_bound.append(gen.name)
    return {"lines": lines, "generators_at_capacity": at_capacity, "ramp_limited": ramp_bound}


def _shed_cause(inst, upper):
    demand = inst.loads.sum()
    capacity = sum(g.p_max for i, g in enumerate(inst.case.generators) if inst.committed[i])
    if capacity < demand - tol.BALANCE:
        return "generation_limit"
    if upper.sum() < demand - tol.BALANCE:
        return "ramp"
    return "line_flow"


def solve_ed(inst):
    case = inst.case
    lower, upper = inst.output_bounds()
    lp, p, shed, spill, network = _ed_program(inst, lower, upper)
    solution = solve_lp(lp)
    if solution.status is not Status.OPTIMAL:
        # only reachable with shedding forbidden
        return None
    x = solution.x
    output = np.zeros(len(case.generators))
    for i, j in p.items():
        output[i] = x[j]
    shed_mw = np.zeros(len(case.buses))
    for k, j in shed.items():
        shed_mw[k] = x[j]
    curtailed = np.zeros(len(case.buses))
    for k, j in spill.items():
        curtailed[k] = x[j]
    flows = network.flow_values(x, case)[0]
    marginal = np.array([g.marginal_cost for g in case.generators])
    no_load = np.array([g.no_load_cost for g in case.generators])
    result = DispatchResult(
        hour=inst.hour,
        output=output,
        shed=shed_mw,
        curtailed=curtailed,
        flows=flows,
        dispatch_cost=float(marginal @ output + no_load @ inst.committed),
        shed_cost=float(case.voll * shed_mw.sum()),
        curtailment_cost=float(case.voll * curtailed.sum()),
        binding=_binding_elements(inst, output, flows, lower, upper),
    )
    if result.total_shed > tol.BALANCE:
        result.shed_cause = _shed_cause(inst, upper)
        logger.info("Hour %d: shed %.2f MW (%s)", inst.hour, result.total_shed, result.shed_cause)
    if curtailed.sum() > tol.BALANCE:
        logger.warning("Hour %d: curtailed %.2f MW of over-generation", inst.hour, curtailed.sum())
    return result


def load_servable(inst):
    """Whether the committed set can serve every bus's load in full."""
    strict = EDInstance(inst.case, inst.hour, inst.loads, inst.committed, inst.previous_output, allow_shedding=False)
    return solve_ed(strict) is not None


def initial_output(case):
    return np.array([g.initial_output if g.initial_on else 0.0 for g in case.generators])


@dataclass
class DayResult:
    schedule: CommitmentSchedule
    hours: list

    @property
    def dispatch_cost(self):
        return float(sum(h.dispatch_cost for h in self.hours))

    @property
    def shed_cost(self):
        return float(sum(h.shed_cost for h in self.hours))

    @property
    def curtailment_cost(self):
        return float(sum(h.curtailment_cost for h in self.hours))

    @property
    def total_cost(self):
        return self.dispatch_cost + self.shed_cost + self.curtailment_cost + self.schedule.transition_cost

    @property
    def shed_mwh(self):
        return float(sum(h.total_shed for h in self.hours))

    @property
    def shed_occurred(self):
        return self.shed_mwh > tol.BALANCE

    @property
    def shed_hours(self):
        return [h.hour for h in self.hours if h.total_shed > tol.BALANCE]

    def shed_causes(self):
        counts = {cause: 0 for cause in SHED_CAUSES}
        for h in self.hours:
            if h.shed_cause:
                counts[h.shed_cause] += 1
        return counts

    def to_dict(self, case):
        return {
            "planned_cost": self.schedule.planned_cost,
            "dispatch_cost": self.dispatch_cost,
            "shed_cost": self.shed_cost,
            "curtailment_cost": self.curtailment_cost,
            "transition_cost": self.schedule.transition_cost,
            "total_cost": self.total_cost,
            "shed_mwh": self.shed_mwh,
            "shed_hours": self.shed_hours,
            "shed_causes": self.shed_causes(),
            "schedule": self.schedule.to_dict(case),
            "hours": [h.to_dict(case) for h in self.hours],
        }

    def summary_row(self):
        return {
            "shed_mwh": round(self.shed_mwh, 6),
            "shed_occurred": int(self.shed_occurred),
            "total_cost": round(self.total_cost, 6),
            "planned_cost": round(self.schedule.planned_cost, 6),
            "shed_hours": len(self.shed_hours),
        }


def run_day(case, forecast_loads, actual_loads, schedule=None, cfg=None):
    """Commit on ``forecast_loads`` (unless ``schedule`` is given), then dispatch every hour on ``actual_loads``."""
    actual = _as_loads(case, actual_loads)
    if schedule is None:
        schedule = solve_uc(UCInstance(case, forecast_loads, horizon=actual.shape[0]), cfg)
    elif schedule.hours != actual.shape[0]:
        raise InstanceError("schedule and actual loads cover different hours",
                            schedule_hours=schedule.hours, load_hours=actual.shape[0])
    previous = initial_output(case)
    hours = []
    for t in range(actual.shape[0]):
        result = solve_ed(EDInstance(case, t, actual[t], schedule.u[:, t], previous))
        hours.append(result)
        previous = result.output
    day = DayResult(schedule, hours)
    logger.info("Day on %s: cost %.2f, shed %.2f MWh", case.name, day.total_cost, day.shed_mwh)
    return day
