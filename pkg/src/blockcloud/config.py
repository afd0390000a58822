"""Scenario configuration: JSON in, validated frozen dataclasses out.

Every problem is reported with its key path; unknown keys are errors.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .bft_select import DEFAULT_DIRECTIONS, KPI_NAMES
from .errors import ConfigError

ROLES = ("super", "tasking", "computing", "storage")
BEHAVIORS = ("honest", "silent", "equivocator", "briber", "double-spender")
ASSIGN_TYPES = ("computing", "storage", "null")
TASK_NORMS = (100.0, 100.0, 1_000_000.0, 10.0, 1000.0, 100.0)
NODE_NORMS = (100.0, 100.0, 100.0)
DEFAULT_NODE_WEIGHTS = (0.4, 0.3, 0.3)
DEFAULT_TASK_PROFILE = ((50, 50, 100_000, 5, 500, 50), (0.2, 0.2, 0.15, 0.15, 0.15, 0.15))


@dataclass(frozen=True)
class NodeConfig:
    id: str
    role: str
    wealth: float
    profile: tuple[float, ...]
    weights: tuple[float, ...] = DEFAULT_NODE_WEIGHTS
    behavior: str = "honest"


@dataclass(frozen=True)
class AssignmentConfig:
    id: str
    type: str = "computing"
    wealth: float = 10.0
    value: float = 0.0
    to: str = ""


@dataclass(frozen=True)
class TaskConfig:
    id: str
    tasker: str
    at_us: int = 0
    scores: tuple[float, ...] = DEFAULT_TASK_PROFILE[0]
    weights: tuple[float, ...] = DEFAULT_TASK_PROFILE[1]
    assignments: tuple[AssignmentConfig, ...] = (AssignmentConfig("a1"),)
    knowledge: tuple[tuple[float, float, float], ...] = ((10.0, 0.9, 0.1),)
    on_fail: str = "abandon"
    handler: str | None = None


@dataclass(frozen=True)
class LatencyConfig:
    min_us: int = 1_000
    max_us: int = 5_000


@dataclass(frozen=True)
class TimerConfig:
    b_timer_us: int = 10_000_000
    t_timer_us: int = 2_000_000
    ack_rounds: int = 3


@dataclass(frozen=True)
class PolicyConfig:
    super_share: float = 0.2
    dominance_threshold: float = 0.5
    tariff_rate: float = 0.1
    validators_per_task: int = 4
    replicas: int = 1
    relevancy_resolution: float = 1e-9


@dataclass(frozen=True)
class DccConfig:
    a: float = 0.05
    b: float = 0.90
    kappa: float = 0.2
    lam: float = 0.7
    h0_sq: float = 0.1
    alpha: float = 0.3


@dataclass(frozen=True)
class BftProfileConfig:
    name: str
    kci: tuple[float, ...]
    kpi: tuple[float, ...]


def _default_profiles() -> tuple[BftProfileConfig, ...]:
    return (
        BftProfileConfig("PBFT", (1, 1), (1000.0, 0.5, 100.0)),
        BftProfileConfig("Zyzzyva", (1, 0), (3000.0, 0.3, 80.0)),
        BftProfileConfig("Chain", (1, 1), (2500.0, 0.4, 120.0)),
    )


@dataclass(frozen=True)
class BftConfig:
    profiles: tuple[BftProfileConfig, ...] = field(default_factory=_default_profiles)
    kci_prefs: tuple[float, ...] = (1, 1)
    kpi_weights: tuple[float, ...] = (0.4, 0.3, 0.3)
    heuristic_weights: tuple[float, ...] | None = None
    directions: tuple[str, ...] = DEFAULT_DIRECTIONS


@dataclass(frozen=True)
class ScenarioConfig:
    nodes: tuple[NodeConfig, ...]
    tasks: tuple[TaskConfig, ...] = ()
    seed: int | None = None
    latency: LatencyConfig = LatencyConfig()
    timers: TimerConfig = TimerConfig()
    policy: PolicyConfig = PolicyConfig()
    dcc: DccConfig = DccConfig()
    bft: BftConfig = BftConfig()
    inject_faults: tuple[str, ...] = ()

    def node(self, node_id: str) -> NodeConfig:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def by_role(self, role: str) -> list[NodeConfig]:
        return [n for n in self.nodes if n.role == role]


# -- parsing -----------------------------------------------------------------


class _Checker:
    def __init__(self) -> None:
        self.errors: list[tuple[str, str]] = []

    def err(self, path: str, msg: str) -> None:
        self.errors.append((path, msg))

    def keys(self, path: str, d: Any, allowed: set[str]) -> dict:
        if not isinstance(d, dict):
            self.err(path or "<root>", "expected an object")
            return {}
        for k in sorted(set(d) - allowed):
            self.err(f"{path}.{k}" if path else k, "unknown key")
        return d

    def num(self, path: str, v: Any, *, lo: float | None = None, hi: float | None = None,
            lo_open: bool = False, integer: bool = False) -> Any:
        ok_type = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok_type or (isinstance(v, float) and not math.isfinite(v)):
            self.err(path, "expected an integer" if integer else "expected a finite number")
            return None
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.err(path, f"must be {'>' if lo_open else '>='} {lo}")
        if hi is not None and v > hi:
            self.err(path, f"must be <= {hi}")
        return v

    def nums(self, path: str, v: Any, n: int | None = None, **kw) -> tuple | None:
        if not isinstance(v, list):
            self.err(path, "expected a list of numbers")
            return None
        if n is not None and len(v) != n:
            self.err(path, f"expected {n} entries, got {len(v)}")
            return None
        vals = [self.num(f"{path}[{i}]", x, **kw) for i, x in enumerate(v)]
        return None if any(x is None for x in vals) else tuple(vals)

    def weights(self, path: str, v: Any, n: int) -> tuple | None:
        w = self.nums(path, v, n, lo=0, hi=1)
        if w is not None and abs(math.fsum(w) - 1) > 1e-9:
            self.err(path, f"weights must sum to 1, got {math.fsum(w)!r}")
            return None
        return w

    def text(self, path: str, v: Any, choices: tuple[str, ...] | None = None) -> str | None:
        if not isinstance(v, str) or not v:
            self.err(path, "expected a non-empty string")
            return None
        if choices and v not in choices:
            self.err(path, f"must be one of {', '.join(choices)}")
            return None
        return v


def _section(c: _Checker, raw: dict, key: str, cls, spec: dict[str, dict]):
    d = c.keys(key, raw.get(key, {}), set(spec))
    vals = {}
    for k, kw in spec.items():
        if k in d:
            name = "lam" if k == "lambda" else k
            vals[name] = c.num(f"{key}.{k}", d[k], **kw)
    if any(v is None for v in vals.values()):
        return cls()
    return cls(**vals)


def _generated_nodes(c: _Checker, counts: Any, wealth: float, seed: int) -> list[NodeConfig]:
    counts = c.keys("node_counts", counts, set(ROLES))
    rng = random.Random(f"nodes:{seed}")
    out = []
    for role in ROLES:
        n = counts.get(role, 0)
        if c.num(f"node_counts.{role}", n, lo=0, integer=True) is None:
            continue
        for i in range(n):
            profile = tuple(float(rng.randint(0, 100)) for _ in range(3))
            out.append(NodeConfig(f"{role}-{i}", role, wealth, profile))
    return out


def _parse_node(c: _Checker, path: str, d: Any, default_wealth: float) -> NodeConfig | None:
    d = c.keys(path, d, {"id", "role", "wealth", "profile", "weights", "behavior"})
    node_id = c.text(f"{path}.id", d.get("id"))
    role = c.text(f"{path}.role", d.get("role"), ROLES)
    wealth = c.num(f"{path}.wealth", d.get("wealth", default_wealth), lo=0)
    profile = c.nums(f"{path}.profile", d.get("profile", [50, 50, 50]), 3, lo=0)
    weights = c.weights(f"{path}.weights", d.get("weights", list(DEFAULT_NODE_WEIGHTS)), 3)
    behavior = c.text(f"{path}.behavior", d.get("behavior", "honest"), BEHAVIORS)
    if None in (node_id, role, wealth, profile, weights, behavior):
        return None
    return NodeConfig(node_id, role, wealth, profile, weights, behavior)


def _parse_task(c: _Checker, path: str, d: Any, i: int) -> TaskConfig | None:
    d = c.keys(path, d, {"id", "tasker", "at_us", "profile", "assignments", "knowledge",
                         "on_fail", "handler"})
    task_id = c.text(f"{path}.id", d.get("id", f"task-{i}"))
    tasker = c.text(f"{path}.tasker", d.get("tasker"))
    at = c.num(f"{path}.at_us", d.get("at_us", 0), lo=0, integer=True)
    prof = c.keys(f"{path}.profile", d.get("profile", {}), {"scores", "weights"})
    scores = c.nums(f"{path}.profile.scores", prof.get("scores", list(DEFAULT_TASK_PROFILE[0])), 6, lo=0)
    weights = c.weights(f"{path}.profile.weights", prof.get("weights", list(DEFAULT_TASK_PROFILE[1])), 6)
    on_fail = c.text(f"{path}.on_fail", d.get("on_fail", "abandon"), ("abandon", "redistribute"))
    handler = d.get("handler")
    if handler is not None:
        handler = c.text(f"{path}.handler", handler)

    assigns = []
    raw_assigns = d.get("assignments", [{"id": "a1"}])
    if not isinstance(raw_assigns, list) or not raw_assigns:
        c.err(f"{path}.assignments", "expected a non-empty list")
        raw_assigns = []
    for j, a in enumerate(raw_assigns):
        ap = f"{path}.assignments[{j}]"
        a = c.keys(ap, a, {"id", "type", "wealth", "value", "to"})
        aid = c.text(f"{ap}.id", a.get("id", f"a{j + 1}"))
        atype = c.text(f"{ap}.type", a.get("type", "computing"), ASSIGN_TYPES)
        wealth = c.num(f"{ap}.wealth", a.get("wealth", 10.0), lo=0)
        value = c.num(f"{ap}.value", a.get("value", 0.0), lo=0)
        to = a.get("to", "")
        if atype == "null" and not to:
            c.err(f"{ap}.to", "a token transfer needs a recipient")
        if None not in (aid, atype, wealth, value):
            assigns.append(AssignmentConfig(aid, atype, wealth, value, to))
    ids = [a.id for a in assigns]
    if len(set(ids)) != len(ids):
        c.err(f"{path}.assignments", "duplicate assignment ids")

    knowledge = []
    raw_k = d.get("knowledge", [[10.0, 0.9, 0.1]])
    if not isinstance(raw_k, list):
        c.err(f"{path}.knowledge", "expected a list of [value, cond_prob, cond_cov]")
        raw_k = []
    for j, k in enumerate(raw_k):
        kp = f"{path}.knowledge[{j}]"
        if not isinstance(k, list) or len(k) != 3:
            c.err(kp, "expected [value, cond_prob, cond_cov]")
            continue
        v = c.num(f"{kp}[0]", k[0], lo=0)
        p = c.num(f"{kp}[1]", k[1], lo=0, hi=1)
        q = c.num(f"{kp}[2]", k[2], lo=0, hi=1)
        if None not in (v, p, q):
            knowledge.append((v, p, q))

    if None in (task_id, tasker, at, scores, weights, on_fail):
        return None
    return TaskConfig(task_id, tasker, at, scores, weights, tuple(assigns), tuple(knowledge),
                      on_fail, handler)


def _parse_bft(c: _Checker, raw: Any) -> BftConfig:
    d = c.keys("bft", raw, {"profiles", "kci_prefs", "kpi_weights", "heuristic_weights", "directions"})
    if not d:
        return BftConfig()
    default = BftConfig()
    profiles = []
    raw_p = d.get("profiles")
    if raw_p is None:
        profiles = list(default.profiles)
    elif not isinstance(raw_p, list) or not raw_p:
        c.err("bft.profiles", "expected a non-empty list")
    else:
        for i, p in enumerate(raw_p):
            pp = f"bft.profiles[{i}]"
            p = c.keys(pp, p, {"name", "kci", "kpi"})
            name = c.text(f"{pp}.name", p.get("name"))
            kci = c.nums(f"{pp}.kci", p.get("kci"), lo=0, hi=1, integer=True)
            kpi = c.nums(f"{pp}.kpi", p.get("kpi"), len(KPI_NAMES), lo=0)
            if None not in (name, kci, kpi):
                profiles.append(BftProfileConfig(name, kci, kpi))
    n_kci = len(profiles[0].kci) if profiles else 0
    if any(len(p.kci) != n_kci for p in profiles):
        c.err("bft.profiles", "every profile needs the same number of KCI entries")
    kci_prefs = c.nums("bft.kci_prefs", d.get("kci_prefs", list(default.kci_prefs)), n_kci or None,
                       lo=0, hi=1, integer=True)
    kpi_w = c.weights("bft.kpi_weights", d.get("kpi_weights", list(default.kpi_weights)), len(KPI_NAMES))
    hw = d.get("heuristic_weights")
    if hw is not None:
        hw = c.weights("bft.heuristic_weights", hw, len(KPI_NAMES))
    dirs = d.get("directions", list(DEFAULT_DIRECTIONS))
    if not isinstance(dirs, list) or len(dirs) != len(KPI_NAMES) or any(x not in ("higher", "lower") for x in dirs):
        c.err("bft.directions", f"expected {len(KPI_NAMES)} entries of 'higher' or 'lower'")
        dirs = list(DEFAULT_DIRECTIONS)
    if kci_prefs is None or kpi_w is None:
        return default
    return BftConfig(tuple(profiles), kci_prefs, kpi_w, hw, tuple(dirs))


_TOP_KEYS = {"seed", "nodes", "node_counts", "initial_wealth", "behaviors", "latency", "timers",
             "tasks", "policy", "dcc", "bft", "inject_faults"}
FAULTS = ("conservation",)


def parse_config(raw: Any) -> ScenarioConfig:
    """Validate a decoded JSON document; raises ConfigError listing every problem."""
    c = _Checker()
    raw = c.keys("", raw, _TOP_KEYS)
    seed = raw.get("seed")
    if seed is not None:
        seed = c.num("seed", seed, lo=0, integer=True)
    wealth = c.num("initial_wealth", raw.get("initial_wealth", 1000), lo=0)
    if wealth is None:
        wealth = 1000

    nodes: list[NodeConfig] = []
    if "nodes" in raw and "node_counts" in raw:
        c.err("nodes", "give either nodes or node_counts, not both")
    if "nodes" in raw:
        if not isinstance(raw["nodes"], list):
            c.err("nodes", "expected a list")
        else:
            for i, n in enumerate(raw["nodes"]):
                node = _parse_node(c, f"nodes[{i}]", n, wealth)
                if node:
                    nodes.append(node)
    else:
        nodes = _generated_nodes(c, raw.get("node_counts", {"super": 4, "tasking": 1, "computing": 4}),
                                 wealth, seed or 0)
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        c.err("nodes", "duplicate node ids")

    behaviors = c.keys("behaviors", raw.get("behaviors", {}), set(ids) | set(raw.get("behaviors", {})))
    for node_id, b in sorted(behaviors.items()):
        if node_id not in ids:
            c.err(f"behaviors.{node_id}", "unknown node")
        elif c.text(f"behaviors.{node_id}", b, BEHAVIORS):
            i = ids.index(node_id)
            n = nodes[i]
            nodes[i] = NodeConfig(n.id, n.role, n.wealth, n.profile, n.weights, b)

    latency = _section(c, raw, "latency", LatencyConfig,
                       {"min_us": dict(lo=0, integer=True), "max_us": dict(lo=0, integer=True)})
    if latency.max_us < latency.min_us:
        c.err("latency", "max_us must be >= min_us")
    timers = _section(c, raw, "timers", TimerConfig, {
        "b_timer_us": dict(lo=0, lo_open=True, integer=True),
        "t_timer_us": dict(lo=0, lo_open=True, integer=True),
        "ack_rounds": dict(lo=1, integer=True),
    })
    policy = _section(c, raw, "policy", PolicyConfig, {
        "super_share": dict(lo=0, hi=1), "dominance_threshold": dict(lo=0, hi=1),
        "tariff_rate": dict(lo=0, hi=1), "validators_per_task": dict(lo=1, integer=True),
        "replicas": dict(lo=1, integer=True), "relevancy_resolution": dict(lo=0, lo_open=True),
    })
    dcc = _section(c, raw, "dcc", DccConfig, {
        "a": dict(lo=0), "b": dict(lo=0), "kappa": dict(lo=0), "lambda": dict(lo=0),
        "h0_sq": dict(lo=0, lo_open=True), "alpha": dict(lo=0, lo_open=True, hi=1),
    })
    if dcc.a + dcc.b >= 1:
        c.err("dcc", "a + b must be < 1")
    bft = _parse_bft(c, raw.get("bft", {}))

    tasks = []
    raw_tasks = raw.get("tasks", [])
    if not isinstance(raw_tasks, list):
        c.err("tasks", "expected a list")
        raw_tasks = []
    for i, t in enumerate(raw_tasks):
        task = _parse_task(c, f"tasks[{i}]", t, i)
        if task is None:
            continue
        tasks.append(task)
        roles = {n.id: n.role for n in nodes}
        if roles.get(task.tasker) != "tasking":
            c.err(f"tasks[{i}].tasker", f"{task.tasker!r} is not a tasking node")
        if task.handler is not None and roles.get(task.handler) != "super":
            c.err(f"tasks[{i}].handler", f"{task.handler!r} is not a super node")
        for j, a in enumerate(task.assignments):
            if a.type == "null" and a.to and a.to not in roles:
                c.err(f"tasks[{i}].assignments[{j}].to", f"unknown node {a.to!r}")
    task_ids = [t.id for t in tasks]
    if len(set(task_ids)) != len(task_ids):
        c.err("tasks", "duplicate task ids")

    supers = sum(1 for n in nodes if n.role == "super")
    if tasks and supers < policy.validators_per_task:
        c.err("nodes", f"need at least {policy.validators_per_task} super nodes, have {supers}")

    faults = c.keys("inject_faults", raw.get("inject_faults", {}), set(FAULTS))
    for k, v in faults.items():
        if not isinstance(v, bool):
            c.err(f"inject_faults.{k}", "expected true or false")

    if c.errors:
        raise ConfigError(c.errors)
    return ScenarioConfig(
        nodes=tuple(nodes), tasks=tuple(tasks), seed=seed, latency=latency, timers=timers,
        policy=policy, dcc=dcc, bft=bft,
        inject_faults=tuple(sorted(k for k, v in faults.items() if v)),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError([("<file>", str(e))]) from None
    except json.JSONDecodeError as e:
        raise ConfigError([("<json>", f"line {e.lineno} column {e.colno}: {e.msg}")]) from None
    return parse_config(raw)
