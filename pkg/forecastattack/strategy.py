"""Choosing which nodal load forecasts to compromise, and in which direction.

``best_first_attack`` uses the network: each round it ranks load buses by how
close their lines and generators run to their limits under the current
schedule, attacks the most exposed one in both directions and keeps the
direction that moves the commitment furthest. ``random_attack`` is the
topology-blind baseline.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .attacks import AttackConfig, attack_series
from .exceptions import InstanceError, UCInfeasible
from .milp import BnBConfig
from .operations import UCInstance, run_day, solve_uc
from .seeding import derive_rng

logger = logging.getLogger(__name__)

DIRECTIONS = ("decrease", "increase")
GAMMA = {"decrease": 1, "increase": -1}
KNOWLEDGE = ("topology", "blind")


@dataclass(frozen=True)
class StrategyConfig:
    n_adv: int
    attack: AttackConfig
    knowledge: str = "topology"
    seed: int = 0
    bnb: BnBConfig = field(default_factory=BnBConfig)

    def __post_init__(self):
        if self.n_adv < 0:
            raise InstanceError("n_adv must be non-negative", n_adv=self.n_adv)
        if self.knowledge not in KNOWLEDGE:
            raise InstanceError(f"unknown attacker knowledge {self.knowledge!r}", knowledge=self.knowledge)


@dataclass
class NodeForecaster:
    """One load bus's forecaster as seen by the attacker, with the day's windows.

    ``clean_mw`` is the operator's clean day-ahead forecast for the bus.
    """

    bus: int
    attacker: object
    windows: list
    scaling: object
    clean_mw: np.ndarray

    def __post_init__(self):
        self.clean_mw = np.asarray(self.clean_mw, dtype=np.float64)
        if len(self.windows) != self.clean_mw.size:
            raise InstanceError(
                f"bus {self.bus}: {len(self.windows)} windows for {self.clean_mw.size} forecast hours", bus=self.bus
            )


@dataclass
class VulnerabilityReport:
    line_slack: dict
    generator_headroom: dict
    scores: list

    @property
    def ranked(self):
        return [bus for bus, _ in self.scores]

    def top(self):
        return self.scores[0][0] if self.scores else None

    def to_dict(self):
        return {
            "line_slack": self.line_slack,
            "generator_headroom": self.generator_headroom,
            "scores": [[bus, score] for bus, score in self.scores],
        }


def _loading(flow, line):
    limit = line.f_max if flow >= 0 else -line.f_min
    if limit <= 0:
        return 1.0 if abs(flow) > 0 else 0.0
    return abs(flow) / limit


def vulnerability_rank(case, schedule, exclude=(), candidates=None):
    """Score buses by line loading and generator loading under ``schedule``.

    score = max over incident monitored lines and hours of |f| / limit
          + max over local generators and hours of p / p_max
    Higher is more exposed; ties go to the lowest bus id.
    """
    flows = np.atleast_2d(schedule.flows)
    line_slack = {}
    loading = {}
    for l, line in enumerate(case.lines):
        if not line.monitored:
            continue
        per_hour = [_loading(f, line) for f in flows[:, l]]
        loading[l] = max(per_hour)
        slack = min(min(line.f_max - f, f - line.f_min) for f in flows[:, l])
        span = max(line.f_max, -line.f_min)
        line_slack[line.name] = {"mw": float(slack), "fraction": float(slack / span) if span > 0 else 0.0}

    generator_headroom = {}
    gen_loading = {}
    for i, gen in enumerate(case.generators):
        output = schedule.p[i]
        generator_headroom[gen.name] = {
            "headroom_mw": float(np.min(gen.p_max - output)),
            "min_output_mw": float(np.min(output)),
        }
        gen_loading[i] = float(np.max(output) / gen.p_max) if gen.p_max > 0 else 0.0

    pool = candidates if candidates is not None else case.load_buses
    excluded = set(exclude)
    scores = []
    for bus in sorted(pool):
        if bus in excluded:
            continue
        line_term = max((loading[l] for l in case.lines_at(bus) if l in loading), default=0.0)
        gen_term = max((gen_loading[i] for i in case.generators_at(bus)), default=0.0)
        scores.append((bus, float(line_term + gen_term)))
    scores.sort(key=lambda item: (-item[1], item[0]))
    return VulnerabilityReport(line_slack, generator_headroom, scores)


def craft_node_attack(node, cfg, direction):
    """Attack every window of ``node`` in ``direction``; returns the AttackSeries."""
    if direction not in GAMMA:
        raise InstanceError(f"unknown attack direction {direction!r}", direction=direction)
    return attack_series(node.attacker, node.windows, replace(cfg, gamma=GAMMA[direction]), node.scaling)


@dataclass
class AttackPlan:
    strategy: str
    nodes: list
    directions: dict
    series: dict
    clean_loads: np.ndarray
    attacked_loads: np.ndarray
    clean_schedule: object
    schedule: object

    @property
    def changed(self):
        return not self.schedule.same_as(self.clean_schedule)

    def commitment_diff(self, case):
        diff = []
        for i, t in zip(*np.nonzero(self.schedule.u != self.clean_schedule.u)):
            diff.append(
                {
                    "generator": case.generators[i].name,
                    "hour": int(t),
                    "clean": int(self.clean_schedule.u[i, t]),
                    "attacked": int(self.schedule.u[i, t]),
                }
            )
        return diff

    def to_record(self, case):
        nodes = []
        for bus in self.nodes:
            series = self.series[bus]
            record = series.to_record()
            record.update({"bus": bus, "direction": self.directions[bus]})
            nodes.append(record)
        return {
            "strategy": self.strategy,
            "nodes": nodes,
            "schedule_changed": self.changed,
            "unit_hours_changed": self.schedule.difference(self.clean_schedule),
            "commitment_diff": self.commitment_diff(case),
        }


def _require_knowledge(cfg, knowledge, search):
    if cfg.knowledge != knowledge:
        raise InstanceError(
            f"{search} needs {knowledge} knowledge, got {cfg.knowledge!r}", knowledge=cfg.knowledge, strategy=search
        )


def _check_nodes(case, nodes):
    missing = sorted(set(case.load_buses) - set(nodes))
    if missing:
        raise InstanceError(f"no forecaster for load buses {missing}", buses=missing)
    hours = {node.clean_mw.size for node in nodes.values()}
    if len(hours) != 1:
        raise InstanceError("nodal forecasts cover different numbers of hours")


def _solve(case, loads, cfg):
    return solve_uc(UCInstance(case, loads, horizon=loads.shape[0]), cfg.bnb)


def _deviation(series):
    return float(np.sum(np.abs(series.attacked_mw() - series.clean_mw())))


def best_first_attack(case, nodes, cfg, clean_schedule=None):
    """Greedy per-node search that stops as soon as the commitment changes.

    ``clean_schedule`` may carry an already solved commitment for the clean forecasts.
    """
    _require_knowledge(cfg, "topology", "best_first")
    _check_nodes(case, nodes)
    clean = {bus: node.clean_mw for bus, node in nodes.items()}
    clean_loads = case.bus_loads(clean)
    if clean_schedule is None:
        clean_schedule = _solve(case, clean_loads, cfg)
    plan = AttackPlan("best_first", [], {}, {}, clean_loads, clean_loads.copy(), clean_schedule, clean_schedule)
    forecasts = dict(clean)

    while len(plan.nodes) < cfg.n_adv and not plan.changed:
        report = vulnerability_rank(case, plan.schedule, exclude=plan.nodes, candidates=list(nodes))
        bus = report.top()
        if bus is None:
            break
        candidates = []
        for direction in DIRECTIONS:
            series = craft_node_attack(nodes[bus], cfg.attack, direction)
            trial = dict(forecasts)
            trial[bus] = series.attacked_mw()
            loads = case.bus_loads(trial)
            try:
                schedule = _solve(case, loads, cfg)
            except UCInfeasible:
                logger.warning("Bus %d %s attack leaves no feasible commitment; candidate dropped", bus, direction)
                continue
            candidates.append((direction, series, loads, schedule))
        if not candidates:
            break

        def preference(item):
            direction, series, _, schedule = item
            changed = schedule.difference(clean_schedule)
            return (changed, 0.0 if changed else _deviation(series), direction == "decrease")

        direction, series, loads, schedule = max(candidates, key=preference)
        plan.nodes.append(bus)
        plan.directions[bus] = direction
        plan.series[bus] = series
        plan.attacked_loads = loads
        plan.schedule = schedule
        forecasts[bus] = series.attacked_mw()
        logger.info(
            "Best-first round %d: bus %d attacked to %s, %d unit-hours changed",
            len(plan.nodes), bus, direction, schedule.difference(clean_schedule),
        )
    return plan


def random_attack(case, nodes, cfg, clean_schedule=None):
    """Seeded uniform choice of buses and directions, then one commitment solve."""
    _require_knowledge(cfg, "blind", "random")
    _check_nodes(case, nodes)
    rng = derive_rng(cfg.seed, "random_attack")
    buses = sorted(nodes)
    count = min(cfg.n_adv, len(buses))
    chosen = [int(b) for b in rng.choice(buses, size=count, replace=False)] if count else []
    clean = {bus: node.clean_mw for bus, node in nodes.items()}
    clean_loads = case.bus_loads(clean)
    if clean_schedule is None:
        clean_schedule = _solve(case, clean_loads, cfg)
    plan = AttackPlan("random", [], {}, {}, clean_loads, clean_loads.copy(), clean_schedule, clean_schedule)
    if not chosen:
        return plan
    forecasts = dict(clean)
    for bus in chosen:
        direction = DIRECTIONS[int(rng.integers(len(DIRECTIONS)))]
        series = craft_node_attack(nodes[bus], cfg.attack, direction)
        plan.nodes.append(bus)
        plan.directions[bus] = direction
        plan.series[bus] = series
        forecasts[bus] = series.attacked_mw()
    plan.attacked_loads = case.bus_loads(forecasts)
    try:
        plan.schedule = _solve(case, plan.attacked_loads, cfg)
    except UCInfeasible:
        logger.warning("Random attack on buses %s leaves no feasible commitment; clean schedule kept", chosen)
    logger.info("Random attack on buses %s: %d unit-hours changed", chosen, plan.schedule.difference(clean_schedule))
    return plan


def evaluate_plan(case, plan, actual_loads, cfg=None):
    """Dispatch the actual loads against the plan's (possibly adversarial) schedule."""
    return run_day(case, plan.attacked_loads, actual_loads, schedule=plan.schedule, cfg=cfg)
