"""Deterministic discrete-event simulation of shards, consensus and the task lifecycle.

Time is integer microseconds.  Events are processed in ``(at, seq)`` order
from a single heap and every random draw comes from one seeded generator,
so a (config, seed) pair always yields the same log.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field, replace
from decimal import Decimal
from functools import partial
from typing import Any, Callable, Iterable, Sequence

from .bft_select import Preferences, ProtocolProfile, select_protocol
from .chain import (
    DEFAULT_SIGNER,
    AssignmentSpec,
    AssignType,
    Block,
    CftxIndex,
    SideChain,
    Signer,
    TaskSpec,
    TranState,
    Vote,
    VoteTally,
    VoteType,
    build_final_block,
    build_next_block,
    canonical_hash,
    check_block,
    fault_tolerance,
    find_equivocations,
    flatten,
    propose_root_block,
    reconstruct,
    tx_root,
)
from .config import (
    NODE_NORMS,
    TASK_NORMS,
    NodeConfig,
    PolicyConfig,
    ScenarioConfig,
    TaskConfig,
)
from .dcc import DccState, KpiPredictor, ema_predict
from .encoding import ZERO_DIGEST
from .err import (
    NodeRankingProfile,
    TaskRankingProfile,
    rank_candidates,
    node_err_score,
    task_err_score,
)
from .errors import BlockCloudError, NegativeBalanceError, ValidationError
from .evg import CreditTable, TaskKnowledgePiece, task_incremental_value
from .money import ZERO, cftx
from .policy import PolicyEngine, genesis_issue, select_service_nodes

# behaviors that vote for whatever they are shown, without validating it
VOTES_ANYTHING = frozenset({"equivocator", "briber", "double-spender"})

_ASSIGN_TYPES = {"computing": AssignType.COMPUTING, "storage": AssignType.STORAGE, "null": AssignType.NULL}
_RESOURCE_ROLE = {AssignType.COMPUTING: "computing", AssignType.STORAGE: "storage"}


@dataclass
class SimNode:
    id: str
    role: str
    err_profile: NodeRankingProfile
    behavior: str = "honest"

    @property
    def score(self) -> float:
        return node_err_score(self.err_profile)

    @property
    def honest(self) -> bool:
        return self.behavior == "honest"


@dataclass
class Shard:
    task_id: str
    validators: tuple[str, ...]
    handler: str
    open: bool = True

    def __post_init__(self) -> None:
        if self.handler not in self.validators:
            raise ValidationError(f"handler {self.handler} is not a validator of {self.task_id}")


# -- event loop ---------------------------------------------------------------------


class EventLoop:
    def __init__(self, seed: int, lat_min: int, lat_max: int):
        if not 0 <= lat_min <= lat_max:
            raise ValidationError(f"bad latency range [{lat_min}, {lat_max}]")
        self.rng = random.Random(seed)
        self.lat_min, self.lat_max = lat_min, lat_max
        self.now = 0
        self._heap: list[tuple[int, int, str, Any]] = []
        self._seq = 0

    def schedule(self, at: int, kind: str, payload: Any) -> None:
        heapq.heappush(self._heap, (at, self._seq, kind, payload))
        self._seq += 1

    def send(self, src: str, dst: str, msg: tuple) -> None:
        delay = 0 if src == dst else self.rng.randint(self.lat_min, self.lat_max)
        self.schedule(self.now + delay, "message", (src, dst, msg))

    def run(self, dispatch: Callable[[str, Any], None], max_events: int = 10_000_000) -> int:
        n = 0
        while self._heap and n < max_events:
            at, _, kind, payload = heapq.heappop(self._heap)
            self.now = at
            dispatch(kind, payload)
            n += 1
        return n


# -- consensus -------------------------------------------------------------------------


@dataclass
class Replica:
    id: str
    behavior: str
    tally: VoteTally
    prepared: dict[int, bytes] = field(default_factory=dict)
    committed: dict[int, bytes] = field(default_factory=dict)
    finalized: dict[int, bytes] = field(default_factory=dict)
    voted: set[tuple[int, bytes, VoteType]] = field(default_factory=set)
    waiting: dict[int, list[bytes]] = field(default_factory=dict)  # proposals whose parent is not prepared yet


class ShardConsensus:
    """Two-phase Prepare/Commit voting among one shard's validators.

    Honest replicas Prepare-vote at most once per height, only for a block
    whose parent they prepared, and Commit only the block they prepared.
    A replica finalizes on a Commit quorum.  Byzantine replicas vote for
    every proposal they see; silent ones never vote.
    """

    def __init__(self, loop: EventLoop, chain_id: str, validators: Sequence[str],
                 behaviors: dict[str, str], leader: str, *, protocol: str = "PBFT",
                 signer: Signer = DEFAULT_SIGNER,
                 validate: Callable[[str, Block], bool] | None = None,
                 on_prepared: Callable[[int, bytes], None] | None = None,
                 on_finalized: Callable[[str, int, bytes], None] | None = None):
        self.loop = loop
        self.chain_id = chain_id
        self.validators = tuple(validators)
        self.n = len(self.validators)
        self.leader = leader
        self.protocol = protocol
        self.signer = signer
        self.validate = validate
        self.on_prepared = on_prepared
        self.on_finalized = on_finalized
        self.replicas = {v: Replica(v, behaviors.get(v, "honest"), VoteTally(self.n)) for v in self.validators}
        self.blocks: dict[bytes, Block] = {}
        self.votes: list[Vote] = []
        self.honest_final: dict[int, set[bytes]] = {}
        self._leader_prepared: set[tuple[int, bytes]] = set()

    def propose(self, block: Block, targets: Iterable[str] | None = None) -> bytes:
        h = canonical_hash(block)
        self.blocks[h] = block
        for r in (self.validators if targets is None else targets):
            self.loop.send(self.leader, r, ("proposal", self.chain_id, h))
        return h

    def deliver(self, dst: str, msg: tuple) -> None:
        rep = self.replicas.get(dst)
        if rep is None:
            return
        if msg[0] == "proposal":
            self._on_proposal(rep, msg[2])
        elif msg[0] == "vote":
            self._on_vote(rep, msg[2])

    def conflicts(self) -> dict[int, set[bytes]]:
        return {h: s for h, s in self.honest_final.items() if len(s) > 1}

    def voters(self, height: int, block_hash: bytes, stage: VoteType = VoteType.PREPARE) -> list[str]:
        return sorted({v.from_addr for v in self.votes
                       if v.hvs == height and v.vote_hash == block_hash and v.vote_type == stage})

    def _cast(self, rep: Replica, height: int, h: bytes, stage: VoteType) -> None:
        key = (height, h, stage)
        if key in rep.voted:
            return
        rep.voted.add(key)
        v = Vote(self.protocol, rep.id, h, height + 1, height, stage, chain_id=self.chain_id).signed(self.signer)
        self.votes.append(v)
        for r in self.validators:
            self.loop.send(rep.id, r, ("vote", self.chain_id, v))

    def _parent_ok(self, rep: Replica, block: Block) -> bool:
        if block.height == 0:
            return block.header.parent_hash == ZERO_DIGEST
        return rep.prepared.get(block.height - 1) == block.header.parent_hash

    def _on_proposal(self, rep: Replica, h: bytes) -> None:
        block = self.blocks[h]
        if rep.behavior == "silent":
            return
        if rep.behavior in VOTES_ANYTHING:
            self._cast(rep, block.height, h, VoteType.PREPARE)
            return
        if block.height in rep.prepared:
            return
        if not self._parent_ok(rep, block):
            if block.height - 1 not in rep.prepared:
                rep.waiting.setdefault(block.height, []).append(h)
            return
        try:
            check_block(block)
        except BlockCloudError:
            return
        if self.validate is not None and not self.validate(rep.id, block):
            return
        rep.prepared[block.height] = h
        self._cast(rep, block.height, h, VoteType.PREPARE)
        self._check(rep, block.height, h)
        for waiting in rep.waiting.pop(block.height + 1, []):
            self._on_proposal(rep, waiting)

    def _on_vote(self, rep: Replica, v: Vote) -> None:
        if v.chain_id != self.chain_id or v.from_addr not in self.replicas or not v.verify(self.signer):
            return
        rep.tally.add(v)
        self._check(rep, v.hvs, v.vote_hash)

    def _check(self, rep: Replica, height: int, h: bytes) -> None:
        hv = height + 1
        if rep.tally.reached(hv, h, VoteType.PREPARE):
            if rep.id == self.leader and (height, h) not in self._leader_prepared:
                self._leader_prepared.add((height, h))
                if self.on_prepared is not None:
                    self.on_prepared(height, h)
            if rep.behavior in VOTES_ANYTHING:
                self._cast(rep, height, h, VoteType.COMMIT)
            elif rep.behavior == "honest" and rep.prepared.get(height) == h and height not in rep.committed:
                rep.committed[height] = h
                self._cast(rep, height, h, VoteType.COMMIT)
        if rep.tally.reached(hv, h, VoteType.COMMIT) and height not in rep.finalized:
            # an honest replica only finalizes the block it prepared itself
            if rep.behavior == "honest" and rep.prepared.get(height) != h:
                return
            rep.finalized[height] = h
            if rep.behavior == "honest":
                self.honest_final.setdefault(height, set()).add(h)
            if self.on_finalized is not None:
                self.on_finalized(rep.id, height, h)


def _conflicting_variant(block: Block, redirect_to: str | None = None, signer: Signer = DEFAULT_SIGNER) -> Block:
    """Same height and parent, different contents: transfers redirected, timestamp nudged."""
    txs = block.transactions
    if redirect_to is not None:
        txs = tuple(replace(t, to_addr=redirect_to).signed(signer) if t.assign_type == AssignType.NULL else t
                    for t in txs)
    header = replace(block.header, ts=block.header.ts + 1, tx_root=tx_root(txs))
    return replace(block, header=header, transactions=txs)


@dataclass(frozen=True)
class ConsensusRun:
    n: int
    byzantine: tuple[str, ...]
    conflicts: dict[int, frozenset[bytes]]
    evidence: tuple
    finalized: dict[str, dict[int, bytes]]

    @property
    def forked(self) -> bool:
        return bool(self.conflicts)


def run_consensus(n: int, n_byzantine: int, seed: int, *, heights: int = 1,
                  lat_min: int = 1_000, lat_max: int = 5_000, mixed: bool = False,
                  signer: Signer = DEFAULT_SIGNER) -> ConsensusRun:
    """One shard agreeing on ``heights`` blocks with ``n_byzantine`` faulty validators.

    If any validator is faulty the leader is one of them and equivocates:
    each proposal goes out in two conflicting versions, one per half of the
    honest replicas.  With ``mixed`` the other faulty validators draw
    silent, equivocating or bribed behavior at random.
    """
    if not 0 <= n_byzantine <= n:
        raise ValidationError("n_byzantine out of range")
    rng = random.Random(seed)
    validators = [f"v{i}" for i in range(n)]
    byz = rng.sample(validators, n_byzantine)
    behaviors = {}
    for i, v in enumerate(byz):
        behaviors[v] = "equivocator" if i == 0 or not mixed else rng.choice(("equivocator", "silent", "briber"))
    leader = byz[0] if byz else validators[0]
    honest = [v for v in validators if v not in behaviors]
    loop = EventLoop(rng.randrange(2**63), lat_min, lat_max)
    cons: ShardConsensus

    def block_at(height: int, parent: bytes, salt: int) -> Block:
        spec = TaskSpec("c", "tasker", leader, (AssignmentSpec("a", AssignType.NULL),),
                        ts=height * 10 + salt, b_timer=10**9)
        root = propose_root_block(spec, signer)
        if height == 0:
            return root
        header = replace(root.header, height=height, parent_hash=parent, epoch=height)
        return replace(root, header=header)

    def on_prepared(height: int, h: bytes) -> None:
        if height + 1 >= heights:
            return
        child = block_at(height + 1, h, 0)
        # keep every branch alive: the child goes to whoever prepared its parent
        targets = cons.voters(height, h) if byz else None
        if byz:
            child = block_at(height + 1, h, sorted(cons.blocks).index(h) % 7)
        cons.propose(child, targets)

    cons = ShardConsensus(loop, "c", validators, behaviors, leader, signer=signer, on_prepared=on_prepared)
    root = block_at(0, ZERO_DIGEST, 0)
    if byz:
        shuffled = honest[:]
        rng.shuffle(shuffled)
        half = (len(shuffled) + 1) // 2
        cons.propose(root, shuffled[:half] + byz)
        cons.propose(_conflicting_variant(root), shuffled[half:] + byz)
    else:
        cons.propose(root)

    loop.run(lambda kind, p: cons.deliver(p[1], p[2]))
    return ConsensusRun(
        n=n,
        byzantine=tuple(sorted(behaviors)),
        conflicts={h: frozenset(s) for h, s in cons.conflicts().items()},
        evidence=tuple(find_equivocations(cons.votes, signer)),
        finalized={r.id: dict(r.finalized) for r in cons.replicas.values()},
    )


# -- assignment distribution --------------------------------------------------------------


@dataclass(frozen=True)
class AssignmentProgress:
    needed: int
    ranking: tuple[str, ...]
    tried: tuple[str, ...] = ()
    acked: frozenset[str] = frozenset()
    round: int = 0
    max_rounds: int = 3


@dataclass(frozen=True)
class RetryAction:
    kind: str  # proceed | redistribute | query | abandon
    targets: tuple[str, ...] = ()


def assignment_retry(progress: AssignmentProgress) -> RetryAction:
    """What the handler does when an acknowledgment timer fires.

    Prior acceptors are kept; only the shortfall goes to the next-ranked
    untried nodes.  Once the retry rounds are used up (or nobody is left to
    try) the tasking node is asked.
    """
    missing = progress.needed - len(progress.acked)
    if missing <= 0:
        return RetryAction("proceed")
    untried = [n for n in progress.ranking if n not in progress.tried]
    if progress.round >= progress.max_rounds or not untried:
        return RetryAction("query")
    return RetryAction("redistribute", tuple(untried[:missing]))


def tasker_decision(progress: AssignmentProgress, policy: str) -> RetryAction:
    """The tasking node's answer to a query: try fresh nodes, or give up."""
    if policy == "redistribute":
        missing = progress.needed - len(progress.acked)
        untried = [n for n in progress.ranking if n not in progress.tried]
        if untried:
            return RetryAction("redistribute", tuple(untried[:missing]))
    return RetryAction("abandon")


# -- scenario -----------------------------------------------------------------------------------


@dataclass
class TaskRun:
    cfg: TaskConfig
    score: float
    shard: Shard | None = None
    consensus: ShardConsensus | None = None
    chain: SideChain | None = None
    protocol: str = ""
    state: str = "pending"  # pending | open | closed | expired
    targets: dict[str, TranState] = field(default_factory=dict)
    progress: dict[str, AssignmentProgress] = field(default_factory=dict)
    results: dict[str, set[str]] = field(default_factory=dict)
    abandoned: set[str] = field(default_factory=set)
    reserved: dict[str, Decimal] = field(default_factory=dict)
    in_flight: bytes | None = None
    wrapup: str = "none"  # none | sent | acked
    expiring: bool = False
    opened_at: int = 0
    closed_at: int | None = None
    b_timer: int = 0
    rewrites: set[int] = field(default_factory=set)

    @property
    def assignments(self) -> dict:
        return {a.id: a for a in self.cfg.assignments}


@dataclass
class SimResult:
    summary: dict
    log: list[str]
    ledger: dict
    violations: list[str]
    tasks: dict[str, TaskRun]
    credit: CreditTable
    engine: PolicyEngine
    max_share: Decimal = Decimal(0)
    signer: Signer = DEFAULT_SIGNER

    @property
    def ok(self) -> bool:
        return not self.violations

    def equivocations(self) -> list:
        return _equivocations(self.tasks, self.signer)


def _equivocations(tasks: dict[str, TaskRun], signer: Signer) -> list:
    out = []
    for tid in sorted(tasks):
        cons = tasks[tid].consensus
        if cons is not None:
            out.extend(find_equivocations(cons.votes, signer))
    return out


class Simulation:
    def __init__(self, cfg: ScenarioConfig, seed: int, signer: Signer = DEFAULT_SIGNER):
        self.cfg = cfg
        self.seed = seed
        self.signer = signer
        self.loop = EventLoop(seed, cfg.latency.min_us, cfg.latency.max_us)
        self.nodes = {
            n.id: SimNode(n.id, n.role, NodeRankingProfile.from_columns(n.profile, n.weights, NODE_NORMS), n.behavior)
            for n in cfg.nodes
        }
        self.credit = CreditTable.from_initial({n.id: n.wealth for n in cfg.nodes})
        p = cfg.policy
        self.engine = PolicyEngine(
            genesis_issue(self.credit.initial_total),
            super_share=Decimal(repr(p.super_share)),
            dominance_threshold=Decimal(repr(p.dominance_threshold)),
            tariff_rate=Decimal(repr(p.tariff_rate)),
        )
        d = cfg.dcc
        self.predictor = KpiPredictor(
            DccState.initial(3, a=d.a, b=d.b, kappa=d.kappa, lam=d.lam, h0_sq=d.h0_sq),
            base=partial(ema_predict, alpha=d.alpha),
        )
        self.kpi_rows = {pr.name: tuple(pr.kpi) for pr in cfg.bft.profiles}
        self.tasks: dict[str, TaskRun] = {}
        self.reserved: dict[str, Decimal] = {}
        self.affinity: dict[str, str] = {}
        self.transfers: list[tuple[str, str, str, str, Decimal]] = []
        self.log: list[str] = []
        self.violations: list[str] = []
        self.tariff_events = 0
        self.max_share = Decimal(0)
        self.blocks_finalized = 0
        self.txs_finalized = 0
        self._fault_injected = False
        self._share_tracking()

    # -- plumbing --

    def _emit(self, kind: str, **fields) -> None:
        rec = {"t": self.loop.now, "ev": kind}
        rec.update(fields)
        self.log.append(json.dumps(rec, sort_keys=True, separators=(",", ":"), default=str))

    def _violation(self, msg: str) -> None:
        self.violations.append(msg)
        self._emit("violation", detail=msg)

    def _share_tracking(self) -> None:
        total = self.credit.ecosystem_total
        if total > 0:
            top = max(self.credit.total(k) for k in self.credit)
            self.max_share = max(self.max_share, top / total)

    def _wealth(self, node_id: str) -> Decimal:
        return self.credit.total(node_id)

    # -- dispatch --

    def run(self) -> SimResult:
        for t in self.cfg.tasks:
            self.loop.schedule(t.at_us, "task-init", t.id)
            self.tasks[t.id] = TaskRun(t, task_err_score(TaskRankingProfile.from_columns(t.scores, t.weights, TASK_NORMS)))
        self.loop.run(self._dispatch)
        self._final_checks()
        return SimResult(self._summary(), self.log, self.ledger(), self.violations, self.tasks,
                         self.credit, self.engine, self.max_share, self.signer)

    def _dispatch(self, kind: str, payload: Any) -> None:
        if kind == "task-init":
            self._emit("task-init", task=payload)
            self._task_init(self.tasks[payload])
        elif kind == "timer":
            self._on_timer(*payload)
        elif kind == "message":
            src, dst, msg = payload
            self._log_message(src, dst, msg)
            self._on_message(src, dst, msg)
        self._check_shards()

    def _log_message(self, src: str, dst: str, msg: tuple) -> None:
        if msg[0] == "vote":
            v: Vote = msg[2]
            self._emit("vote", task=msg[1], src=src, dst=dst, stage=v.vote_type.name,
                       height=v.hvs, block=v.vote_hash.hex()[:16])
        elif msg[0] == "proposal":
            self._emit("proposal", task=msg[1], src=src, dst=dst, block=msg[2].hex()[:16])
        else:
            self._emit(msg[0], src=src, dst=dst, task=msg[1], detail=list(msg[2:]))

    def _on_message(self, src: str, dst: str, msg: tuple) -> None:
        task = self.tasks[msg[1]]
        kind = msg[0]
        if kind in ("proposal", "vote"):
            if task.consensus is not None:
                task.consensus.deliver(dst, msg)
        elif kind == "assign":
            self._resource_on_assign(task, dst, msg[2])
        elif kind == "ack":
            self._handler_on_ack(task, src, msg[2])
        elif kind == "result":
            self._handler_on_result(task, src, msg[2])
        elif kind == "query":
            self._tasker_on_query(task, dst, msg[2])
        elif kind == "decision":
            self._handler_on_decision(task, msg[2], msg[3])
        elif kind == "wrapup":
            if self.nodes[dst].behavior != "silent":
                self.loop.send(dst, src, ("wrapup-ack", task.cfg.id))
        elif kind == "wrapup-ack":
            if task.wrapup == "sent":
                task.wrapup = "acked"
                self._try_propose(task)

    def _on_timer(self, kind: str, task_id: str, *args) -> None:
        task = self.tasks[task_id]
        if task.state != "open":
            return
        self._emit("timer", timer=kind, task=task_id, detail=list(args))
        if kind == "b_timer":
            self._on_b_timer(task)
        elif kind == "t_timer":
            self._on_t_timer(task, *args)

    # -- task start --

    def _select_shard(self, task: TaskRun) -> Shard:
        k = self.cfg.policy.validators_per_task
        has_transfer = any(a.type == "null" for a in task.cfg.assignments)
        prior = self.affinity.get(task.cfg.tasker) if has_transfer else None
        if prior is not None and self.tasks[prior].state == "open" and self.tasks[prior].shard:
            # transfers from one sender share a handler so conflicts meet in one place
            s = self.tasks[prior].shard
            return Shard(task.cfg.id, s.validators, s.handler)
        supers = [n for n in self.nodes.values() if n.role == "super"]
        cands = [(n.id, n.score, self._wealth(n.id)) for n in supers]
        chosen, handler = select_service_nodes(task.score, cands, k, self.cfg.policy.relevancy_resolution)
        pinned = task.cfg.handler
        if pinned is not None:
            if pinned not in chosen:
                chosen = chosen[:-1] + [pinned]
            handler = pinned
        return Shard(task.cfg.id, tuple(sorted(chosen)), handler)

    def _choose_protocol(self) -> str:
        b = self.cfg.bft
        profiles = [ProtocolProfile(p.name, p.kci, self.kpi_rows[p.name]) for p in b.profiles]
        prefs = Preferences(b.kci_prefs, b.kpi_weights, b.heuristic_weights)
        try:
            idx, _ = select_protocol(profiles, prefs, b.directions)
        except BlockCloudError:
            return profiles[0].name
        return profiles[idx].name

    def _task_init(self, task: TaskRun) -> None:
        cfg = task.cfg
        shard = self._select_shard(task)
        task.shard = shard
        task.state = "open"
        task.opened_at = self.loop.now
        task.b_timer = self.loop.now + self.cfg.timers.b_timer_us
        task.protocol = self._choose_protocol()
        if any(a.type == "null" for a in cfg.assignments):
            self.affinity.setdefault(cfg.tasker, cfg.id)
        self._emit("shard-open", task=cfg.id, validators=list(shard.validators), handler=shard.handler,
                   protocol=task.protocol, score=round(task.score, 9))
        behaviors = {v: self.nodes[v].behavior for v in shard.validators}
        task.consensus = ShardConsensus(
            self.loop, cfg.id, shard.validators, behaviors, shard.handler, protocol=task.protocol,
            signer=self.signer,
            validate=partial(self._validate_block, task),
            on_prepared=partial(self._on_prepared, task),
            on_finalized=partial(self._on_finalized, task),
        )
        self.loop.schedule(task.b_timer, "timer", ("b_timer", cfg.id))

        handler = self.nodes[shard.handler]
        if handler.behavior == "silent":
            return
        # the handler checks transfers on intake, so submission order settles conflicts
        for a in cfg.assignments:
            if a.type == "null":
                self._reserve_transfer(task, a)
        specs = tuple(
            AssignmentSpec(a.id, _ASSIGN_TYPES[a.type], cftx(a.wealth), a.to, cftx(a.value),
                           t_timer=self.cfg.timers.t_timer_us)
            for a in cfg.assignments
        )
        index = CftxIndex(self.engine.supply.circulating, sum((cftx(a.wealth) for a in cfg.assignments), ZERO),
                          self._wealth(shard.handler), task.score)
        root = propose_root_block(
            TaskSpec(cfg.id, cfg.tasker, shard.handler, specs, ts=self.loop.now, b_timer=task.b_timer,
                     cftx_index=index),
            self.signer,
        )
        self._propose(task, root)

    def _propose(self, task: TaskRun, block: Block) -> None:
        cons = task.consensus
        handler = self.nodes[task.shard.handler]
        if handler.behavior in VOTES_ANYTHING and block.height == 0:
            # equivocating handler: two versions of the root, one per half of the honest validators
            honest = [v for v in task.shard.validators if self.nodes[v].honest]
            byz = [v for v in task.shard.validators if not self.nodes[v].honest]
            self.loop.rng.shuffle(honest)
            half = (len(honest) + 1) // 2
            variant = _conflicting_variant(block, handler.id, self.signer)
            task.in_flight = cons.propose(block, honest[:half] + byz)
            cons.propose(variant, honest[half:] + byz)
            self._emit("equivocate", task=task.cfg.id, height=0)
        else:
            task.in_flight = cons.propose(block)

    # -- validation by replicas --

    def _validate_block(self, task: TaskRun, replica: str, block: Block) -> bool:
        """Replica-side checks on top of the structural ones: no transfer may overdraw."""
        if block.height == 0:
            return True
        prev_states = {}
        if task.chain is not None:
            prev_states = {k: s.state for k, s in task.chain.status.items()}
        for t in block.transactions:
            if t.assign_type != AssignType.NULL or t.abandoned:
                continue
            if t.tran_state == TranState.ACCEPTANCE and prev_states.get(t.assign_id) == TranState.INITIATION:
                if task.reserved.get(t.assign_id) != t.value:
                    return False
        return True

    # -- handler side --

    def _on_prepared(self, task: TaskRun, height: int, h: bytes) -> None:
        block = task.consensus.blocks[h]
        if task.state != "open":
            return
        if height == 0:
            if task.chain is not None:
                return
            task.chain = SideChain.from_root(task.cfg.id, block)
            task.in_flight = None
            self._distribute(task)
        else:
            if task.chain is None or task.chain.closed or block.header.parent_hash != task.chain.tip_hash:
                return
            task.chain.append(block)
            task.in_flight = None
        self._try_propose(task)

    def _distribute(self, task: TaskRun) -> None:
        for a in task.cfg.assignments:
            atype = _ASSIGN_TYPES[a.type]
            if atype == AssignType.NULL:
                continue
            pool = [n for n in self.nodes.values() if n.role == _RESOURCE_ROLE[atype]]
            cands = [(n.id, n.score, self._wealth(n.id)) for n in pool]
            if not cands:
                task.abandoned.add(a.id)
                self._emit("abandon", task=task.cfg.id, assignment=a.id, reason="no resource nodes")
                continue
            ranking = tuple(rank_candidates(task.score, cands, self.cfg.policy.relevancy_resolution))
            needed = min(self.cfg.policy.replicas, len(ranking))
            prog = AssignmentProgress(needed, ranking, max_rounds=self.cfg.timers.ack_rounds)
            task.progress[a.id] = prog
            task.results[a.id] = set()
            self._send_assignment(task, a.id, ranking[:needed])

    def _reserve_transfer(self, task: TaskRun, a) -> None:
        sender = task.cfg.tasker
        amount = cftx(a.value)
        available = self._wealth(sender) - self.reserved.get(sender, ZERO)
        if amount > available:
            task.abandoned.add(a.id)
            self._emit("overdraft", task=task.cfg.id, assignment=a.id, sender=sender,
                       amount=str(amount), available=str(available))
            return
        self.reserved[sender] = self.reserved.get(sender, ZERO) + amount
        task.reserved[a.id] = amount
        task.targets[a.id] = TranState.COMPLETION

    def _send_assignment(self, task: TaskRun, assign_id: str, targets: Sequence[str]) -> None:
        prog = task.progress[assign_id]
        task.progress[assign_id] = replace(prog, tried=prog.tried + tuple(targets))
        for r in targets:
            self.loop.send(task.shard.handler, r, ("assign", task.cfg.id, assign_id))
        rnd = task.progress[assign_id].round
        self.loop.schedule(self.loop.now + self.cfg.timers.t_timer_us, "timer",
                           ("t_timer", task.cfg.id, assign_id, rnd))

    def _resource_on_assign(self, task: TaskRun, node: str, assign_id: str) -> None:
        if self.nodes[node].behavior == "silent":
            return
        handler = task.shard.handler
        self.loop.send(node, handler, ("ack", task.cfg.id, assign_id))
        # work takes one more network hop's worth of time
        self.loop.send(node, handler, ("result", task.cfg.id, assign_id))

    def _handler_on_ack(self, task: TaskRun, node: str, assign_id: str) -> None:
        prog = task.progress.get(assign_id)
        if task.state != "open" or prog is None or assign_id in task.abandoned or node not in prog.tried:
            return
        if len(prog.acked) >= prog.needed or node in prog.acked:
            return
        prog = replace(prog, acked=prog.acked | {node})
        task.progress[assign_id] = prog
        if len(prog.acked) == prog.needed:
            task.targets[assign_id] = max(task.targets.get(assign_id, TranState.INITIATION), TranState.ACCEPTANCE)
        self._update_completion(task, assign_id)
        self._try_propose(task)

    def _handler_on_result(self, task: TaskRun, node: str, assign_id: str) -> None:
        prog = task.progress.get(assign_id)
        if task.state != "open" or prog is None or node not in prog.tried:
            return
        # a result may overtake its acknowledgment on the network; it counts once the ack is in
        task.results[assign_id].add(node)
        self._update_completion(task, assign_id)
        self._try_propose(task)

    def _update_completion(self, task: TaskRun, assign_id: str) -> None:
        prog = task.progress[assign_id]
        if len(prog.acked) == prog.needed and prog.acked <= task.results[assign_id]:
            task.targets[assign_id] = TranState.COMPLETION

    def _on_t_timer(self, task: TaskRun, assign_id: str, rnd: int) -> None:
        prog = task.progress.get(assign_id)
        if task.state != "open" or prog is None or prog.round != rnd or assign_id in task.abandoned:
            return
        action = assignment_retry(prog)
        if action.kind == "proceed":
            return
        self._emit("retry", task=task.cfg.id, assignment=assign_id, action=action.kind,
                   targets=list(action.targets))
        if action.kind == "redistribute":
            task.progress[assign_id] = replace(prog, round=prog.round + 1)
            self._send_assignment(task, assign_id, action.targets)
        elif action.kind == "query":
            self.loop.send(task.shard.handler, task.cfg.tasker, ("query", task.cfg.id, assign_id))

    def _tasker_on_query(self, task: TaskRun, tasker: str, assign_id: str) -> None:
        if self.nodes[tasker].behavior == "silent":
            return
        self.loop.send(tasker, task.shard.handler, ("decision", task.cfg.id, assign_id, task.cfg.on_fail))

    def _handler_on_decision(self, task: TaskRun, assign_id: str, policy: str) -> None:
        prog = task.progress.get(assign_id)
        if task.state != "open" or prog is None or assign_id in task.abandoned:
            return
        action = tasker_decision(prog, policy)
        self._emit("tasker-decision", task=task.cfg.id, assignment=assign_id, action=action.kind)
        if action.kind == "redistribute":
            task.progress[assign_id] = replace(prog, round=0)
            self._send_assignment(task, assign_id, action.targets)
        else:
            task.abandoned.add(assign_id)
            self._try_propose(task)

    def _on_b_timer(self, task: TaskRun) -> None:
        if task.state != "open":
            return
        if task.chain is None or not self.nodes[task.shard.handler].honest:
            task.state = "expired"
            task.shard.open = False
            self._release(task)
            self._emit("task-expired", task=task.cfg.id)
            return
        task.expiring = True
        for a in task.cfg.assignments:
            if task.chain.status[a.id].state != TranState.COMPLETION:
                task.abandoned.add(a.id)
        self._try_propose(task)

    def _try_propose(self, task: TaskRun) -> None:
        chain = task.chain
        if task.state != "open" or chain is None or chain.closed or task.in_flight is not None:
            return
        if self.nodes[task.shard.handler].behavior == "silent":
            return
        updates = {}
        for aid, st in chain.status.items():
            if aid in task.abandoned or st.abandoned:
                continue
            target = task.targets.get(aid, st.state)
            if target > st.state:
                updates[aid] = TranState(st.state + 1)
        newly_abandoned = sorted(a for a in task.abandoned if not chain.status[a].abandoned
                                 and chain.status[a].state != TranState.COMPLETION)
        if updates or newly_abandoned:
            block = build_next_block(chain, updates, self.loop.now, abandoned=newly_abandoned, signer=self.signer)
            self._propose(task, block)
            return
        done = all(s.abandoned or s.state == TranState.COMPLETION for s in chain.status.values())
        if not done:
            return
        if task.wrapup == "none" and not task.expiring:
            task.wrapup = "sent"
            self.loop.send(task.shard.handler, task.cfg.tasker, ("wrapup", task.cfg.id))
            return
        if task.wrapup == "acked" or task.expiring:
            self._propose(task, build_final_block(chain, self.loop.now, signer=self.signer))

    # -- finalization --

    def _on_finalized(self, task: TaskRun, replica: str, height: int, h: bytes) -> None:
        handler = self.nodes[task.shard.handler]
        if replica != handler.id:
            return
        if handler.behavior in VOTES_ANYTHING and height not in task.rewrites:
            # short-range attempt: re-propose a rewritten block at a height that just finalized
            task.rewrites.add(height)
            block = task.consensus.blocks[h]
            variant = _conflicting_variant(block, handler.id, self.signer)
            task.consensus.propose(_conflicting_variant(variant, handler.id, self.signer))
            self._emit("rewrite-attempt", task=task.cfg.id, height=height)
        self.blocks_finalized += 1
        if task.chain is not None and task.chain.closed and h == task.chain.tip_hash and task.state == "open":
            self._close(task)

    def _release(self, task: TaskRun) -> None:
        for aid, amount in task.reserved.items():
            self.reserved[task.cfg.tasker] -= amount
        task.reserved = {}
        if self.affinity.get(task.cfg.tasker) == task.cfg.id:
            del self.affinity[task.cfg.tasker]

    def _close(self, task: TaskRun) -> None:
        chain = task.chain
        task.state = "closed"
        task.closed_at = self.loop.now
        task.shard.open = False
        self.txs_finalized += sum(len(b.transactions) for b in chain.blocks)
        final_states = chain.status
        root_txs = {t.assign_id: t for t in chain.root.transactions}

        # token transfers: whatever the finalized root says, unless abandoned
        for aid, amount in sorted(task.reserved.items()):
            if final_states[aid].abandoned:
                continue
            tx = root_txs[aid]
            self.credit = self.credit.apply_increment(tx.from_addr, -tx.value)
            self.credit = self.credit.apply_increment(tx.to_addr, tx.value)
            self.transfers.append((task.cfg.id, aid, tx.from_addr, tx.to_addr, tx.value))
        self._release(task)

        # DPoEV: issue for the created value, split it, burn the dust
        worked = [aid for aid, prog in sorted(task.progress.items())
                  if not final_states[aid].abandoned and final_states[aid].state == TranState.CLOSE]
        increment = ZERO
        if worked and task.cfg.knowledge:
            pieces = [TaskKnowledgePiece(*k) for k in task.cfg.knowledge]
            increment = cftx(task_incremental_value(pieces))
        issued = self.engine.issue_for_task(task.cfg.id, increment)
        supers = {}
        for v in task.consensus.votes:
            if v.from_addr in task.shard.validators:
                supers[v.from_addr] = supers.get(v.from_addr, 0) + 1
        resources: dict[str, float] = {}
        for aid in worked:
            wealth = float(task.assignments[aid].wealth) or 1.0
            done = sorted(task.progress[aid].acked & task.results[aid])
            for node in done:
                resources[node] = resources.get(node, 0.0) + wealth / len(done)
        awards, unawarded = self.engine.reward_task(task.cfg.id, issued, supers, resources)
        if sum(awards.values(), ZERO) + unawarded != issued:
            self._violation(f"{task.cfg.id}: awards plus dust differ from task wealth")
        for node, amt in sorted(awards.items()):
            if amt:
                self.credit = self.credit.apply_increment(node, amt)
        if self.engine.audit and any(r["type"] == "tariff" and r.get("task") == task.cfg.id
                                     for r in self.engine.audit[-3:]):
            self.tariff_events += 1
        self.engine.true_up()

        if "conservation" in self.cfg.inject_faults and not self._fault_injected:
            self._fault_injected = True
            first = sorted(self.credit)[0]
            self.credit = self.credit.apply_increment(first, 1)

        self._check_conservation(task.cfg.id)
        self._share_tracking()
        self._observe_kpis(task)
        self._emit("task-closed", task=task.cfg.id, blocks=len(chain), issued=str(issued),
                   unawarded=str(unawarded), awards={k: str(v) for k, v in sorted(awards.items())},
                   abandoned=sorted(a for a, s in final_states.items() if s.abandoned))

    def _observe_kpis(self, task: TaskRun) -> None:
        secs = max(task.closed_at - task.opened_at, 1) / 1e6
        obs = [len(task.chain.blocks) / secs, secs, float(len(task.cfg.assignments))]
        if self.predictor.history:
            self.predictor.forecast()
        self.predictor.observe(obs)
        fc = self.predictor.forecast()
        self.kpi_rows[task.protocol] = tuple(max(float(x), 0.0) for x in fc)

    # -- invariants --

    def _check_conservation(self, where: str) -> None:
        supply = self.engine.supply
        if supply.circulating != supply.genesis + supply.issued - supply.burned:
            self._violation(f"{where}: supply identity broken")
        if self.credit.ecosystem_total != supply.circulating:
            self._violation(f"{where}: node wealth {self.credit.ecosystem_total} != circulating {supply.circulating}")

    def _check_shards(self) -> None:
        open_tasks = sum(1 for t in self.tasks.values() if t.state == "open")
        open_shards = sum(1 for t in self.tasks.values() if t.shard is not None and t.shard.open)
        if open_tasks != open_shards:
            self._violation(f"{open_shards} shards open for {open_tasks} open tasks")

    def _final_checks(self) -> None:
        self._check_conservation("end")
        chains = {}
        lat_min = self.cfg.latency.min_us
        for tid, task in sorted(self.tasks.items()):
            if task.state == "open":
                self._violation(f"{tid}: still open when the event queue drained")
            if task.consensus is not None and task.consensus.conflicts():
                self._violation(f"{tid}: conflicting finalizations at heights {sorted(task.consensus.conflicts())}")
            if task.chain is None:
                continue
            if not task.chain.verify_links():
                self._violation(f"{tid}: broken chain links")
            chains[tid] = task.chain
            if len(task.shard.validators) > 1:
                ts = [b.header.ts for b in task.chain.blocks]
                for a, b in zip(ts, ts[1:]):
                    if b - a < 2 * lat_min:
                        self._violation(f"{tid}: block interval {b - a}us below twice the minimum latency")
                        break
        if chains:
            flat = flatten(chains)
            rebuilt = reconstruct(flat)
            if {k: [canonical_hash(b) for b in v] for k, v in rebuilt.items()} != \
                    {k: list(c.hashes) for k, c in chains.items()}:
                self._violation("flattened chain does not reconstruct the side chains")

    # -- outputs --

    def ledger(self) -> dict:
        """Finalized token movements: per-node net transfer balance and the transfer list."""
        net: dict[str, Decimal] = {}
        for _, _, src, dst, amount in self.transfers:
            net[src] = net.get(src, ZERO) - amount
            net[dst] = net.get(dst, ZERO) + amount
        return {
            "balances": {k: str(v) for k, v in sorted(net.items()) if v != 0},
            "transfers": sorted(f"{src}->{dst}:{amount}" for _, _, src, dst, amount in self.transfers),
        }

    def _summary(self) -> dict:
        closed = [t for t in self.tasks.values() if t.state == "closed"]
        end = max([t.closed_at or 0 for t in self.tasks.values()]
                  + [t.b_timer for t in self.tasks.values() if t.state == "expired"] + [0])
        sim_secs = end / 1e6
        s = self.engine.supply
        all_honest = all(n.honest for n in self.nodes.values())
        live = all(t.closed_at is not None and t.closed_at <= t.b_timer for t in self.tasks.values())
        conflicts = sum(len(t.consensus.conflicts()) for t in self.tasks.values() if t.consensus)
        summary = {
            "ev": "summary",
            "seed": self.seed,
            "blocks": sum(len(t.chain) for t in closed),
            "finalized_tasks": len(closed),
            "expired_tasks": sum(1 for t in self.tasks.values() if t.state == "expired"),
            "sim_time_us": end,
            "sim_tps": round(self.txs_finalized / sim_secs, 6) if sim_secs else 0.0,
            "supply": {"genesis": str(s.genesis), "issued": str(s.issued), "burned": str(s.burned),
                       "circulating": str(s.circulating)},
            "tariff_events": self.tariff_events,
            "max_wealth_share": str(round(self.max_share, 6)),
            "conflicting_finalizations": conflicts,
            "equivocations": len(_equivocations(self.tasks, self.signer)),
            "invariants": {
                "conservation": not any("circulating" in v or "supply" in v or "dust" in v for v in self.violations),
                "safety": conflicts == 0,
                "liveness": live if all_honest else None,
            },
            "violations": list(self.violations),
        }
        return summary


def run_scenario(config: ScenarioConfig, seed: int | None = None) -> tuple[dict, list[str]]:
    """Run one scenario; returns the summary record and the event log lines."""
    seed = config.seed if seed is None else seed
    result = Simulation(config, seed or 0).run()
    lines = result.log + [json.dumps(result.summary, sort_keys=True, separators=(",", ":"))]
    return result.summary, lines


def simulate(config: ScenarioConfig, seed: int | None = None) -> SimResult:
    seed = config.seed if seed is None else seed
    return Simulation(config, seed or 0).run()


# -- attack scenarios ------------------------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    attack: str
    passed: bool
    ledger_equal: bool
    details: dict

    def as_dict(self) -> dict:
        return {"attack": self.attack, "passed": self.passed, "ledger_equal": self.ledger_equal,
                **self.details}


def _supers(n: int, rng: random.Random) -> list[NodeConfig]:
    return [NodeConfig(f"super-{i}", "super", 1000, tuple(float(rng.randint(10, 90)) for _ in range(3)))
            for i in range(n)]


def _resources(n: int, rng: random.Random, wealth: float = 1000) -> list[NodeConfig]:
    return [NodeConfig(f"computing-{i}", "computing", wealth, tuple(float(rng.randint(10, 90)) for _ in range(3)))
            for i in range(n)]


def _with_behaviors(nodes: list[NodeConfig], behaviors: dict[str, str]) -> tuple[NodeConfig, ...]:
    return tuple(replace(n, behavior=behaviors.get(n.id, n.behavior)) for n in nodes)


def _transfer_task(task_id: str, sender: str, to: str, amount: float, at: int = 0,
                   handler: str | None = None, work: bool = True) -> TaskConfig:
    from .config import AssignmentConfig
    assigns = [AssignmentConfig("pay", "null", 0.0, amount, to)]
    if work:
        assigns.append(AssignmentConfig("work", "computing", 10.0))
    return TaskConfig(task_id, sender, at, assignments=tuple(assigns), handler=handler)


def attack_double_spend(seed: int = 0, *, n_validators: int = 4, colluders: int = 0) -> Verdict:
    """A tasking node pays the same funds to two recipients at once.

    With ``colluders`` the shard's handler and ``colluders - 1`` further
    validators are Byzantine and vote for anything.
    """
    rng = random.Random(seed)
    supers = _supers(n_validators, rng)
    people = [NodeConfig("mallory", "tasking", 100, (50, 50, 50)),
              NodeConfig("bob", "tasking", 100, (50, 50, 50)),
              NodeConfig("carol", "tasking", 100, (50, 50, 50))]
    nodes = supers + people + _resources(3, rng)
    handler = supers[0].id if colluders else None
    honest_tasks = (_transfer_task("pay-bob", "mallory", "bob", 80, 0, handler),)
    attack_tasks = honest_tasks + (_transfer_task("pay-carol", "mallory", "carol", 80, 1, handler),)
    behaviors = {"mallory": "double-spender"}
    for s in supers[:colluders]:
        behaviors[s.id] = "equivocator"
    policy = PolicyConfig(validators_per_task=n_validators)
    base_cfg = ScenarioConfig(nodes=tuple(nodes), tasks=honest_tasks, policy=policy)
    att_cfg = ScenarioConfig(nodes=_with_behaviors(nodes, behaviors), tasks=attack_tasks, policy=policy)
    base = simulate(base_cfg, seed)
    att = simulate(att_cfg, seed)
    spent = sum(Decimal(a.split(":")[1]) for a in att.ledger["transfers"] if a.startswith("mallory->"))
    both = spent > 100
    evidence = att.equivocations()
    equal = att.ledger == base.ledger
    f = fault_tolerance(n_validators)
    passed = (not both and equal and att.ok) if colluders <= f else True
    return Verdict("double-spend", passed, equal, {
        "both_finalized": both, "colluders": colluders, "fault_bound": f,
        "evidence": len(evidence), "violations": att.violations,
    })


def attack_short_range(seed: int = 0, *, n_validators: int = 4) -> Verdict:
    """The handler tries to rewrite blocks that already finalized."""
    rng = random.Random(seed)
    supers = _supers(n_validators, rng)
    nodes = supers + [NodeConfig("alice", "tasking", 500, (50, 50, 50)),
                      NodeConfig("bob", "tasking", 0, (50, 50, 50))] + _resources(3, rng)
    tasks = (_transfer_task("pay", "alice", "bob", 120, 0, supers[0].id),
             _transfer_task("pay-2", "alice", "bob", 30, 3_000_000, supers[0].id))
    policy = PolicyConfig(validators_per_task=n_validators)
    base = simulate(ScenarioConfig(nodes=tuple(nodes), tasks=tasks, policy=policy), seed)
    att = simulate(ScenarioConfig(nodes=_with_behaviors(nodes, {supers[0].id: "equivocator"}),
                                  tasks=tasks, policy=policy), seed)
    attempts = sum(len(t.rewrites) for t in att.tasks.values())
    equal = att.ledger == base.ledger
    return Verdict("short-range", equal and att.ok and attempts > 0, equal, {
        "rewrite_attempts": attempts, "violations": att.violations,
        "conflicts": att.summary["conflicting_finalizations"],
    })


def attack_51(seed: int = 0, *, n_supers: int = 8, n_tasks: int = 24) -> Verdict:
    """A wealthy greedy producer with bribed validators over a run of tasks.

    The finalized ledger must match the honest run, fairness tariffs must
    fire, and no node may reach a 51% share of all wealth.
    """
    rng = random.Random(seed)
    supers = _supers(n_supers, rng)
    whale = NodeConfig("whale", "super", 0, (90, 90, 90))
    others = supers + _resources(4, rng, wealth=500) + [
        NodeConfig("alice", "tasking", 1000, (50, 50, 50)), NodeConfig("bob", "tasking", 1000, (50, 50, 50))]
    rest = sum(n.wealth for n in others)
    whale = replace(whale, wealth=round(rest * 0.45 / 0.55))
    nodes = [whale] + others
    tasks = []
    for i in range(n_tasks):
        scores = (rng.randint(0, 100), rng.randint(0, 100), rng.randint(0, 10**6), rng.randint(0, 10),
                  rng.randint(0, 1000), rng.randint(0, 100))
        if i % 4 == 0:
            t = _transfer_task(f"t{i}", "alice", "bob", 10, i * 500_000)
        else:
            t = TaskConfig(f"t{i}", "alice", i * 500_000, scores=scores,
                           knowledge=((rng.randint(50, 500), 0.9, 0.2),))
        tasks.append(t)
    policy = PolicyConfig(validators_per_task=4, relevancy_resolution=0.05)
    behaviors = {"whale": "briber"}
    base = simulate(ScenarioConfig(nodes=tuple(nodes), tasks=tuple(tasks), policy=policy), seed)
    att = simulate(ScenarioConfig(nodes=_with_behaviors(nodes, behaviors), tasks=tuple(tasks),
                                  policy=policy), seed)
    equal = att.ledger == base.ledger
    share = att.max_share
    tariffs = att.summary["tariff_events"]
    return Verdict("51%", equal and att.ok and tariffs > 0 and share < Decimal("0.51"), equal, {
        "tariff_events": tariffs, "max_wealth_share": f"{share:.6f}", "violations": att.violations,
    })


def attack_shard_takeover(seed: int = 0, *, n_supers: int = 30, n_attackers: int = 1,
                          n_tasks: int = 1000, k: int = 4) -> Verdict:
    """How often colluding super nodes land in, or take over, a shard under relevancy sharding."""
    rng = random.Random(seed)
    ids = [f"super-{i}" for i in range(n_supers)]
    attackers = set(ids[:n_attackers])
    nodes = [(i, node_err_score(NodeRankingProfile.from_columns(
        [rng.randint(0, 100) for _ in range(3)], (0.4, 0.3, 0.3), NODE_NORMS)), 1000) for i in ids]
    landed = takeovers = 0
    f = fault_tolerance(k)
    for _ in range(n_tasks):
        scores = (rng.randint(0, 100), rng.randint(0, 100), rng.randint(0, 10**6), rng.randint(0, 10),
                  rng.randint(0, 1000), rng.randint(0, 100))
        score = task_err_score(TaskRankingProfile.from_columns(scores, (0.2, 0.2, 0.15, 0.15, 0.15, 0.15),
                                                               TASK_NORMS))
        chosen, _ = select_service_nodes(score, nodes, k)
        inside = len(attackers & set(chosen))
        landed += inside > 0
        takeovers += inside > f
    frac = landed / n_tasks
    return Verdict("shard-takeover", frac < 1 / 3 and takeovers == 0 if n_attackers <= f else frac < 1 / 3,
                   True, {"landed_fraction": frac, "takeovers": takeovers, "tasks": n_tasks})
