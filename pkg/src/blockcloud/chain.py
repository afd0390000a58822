"""Task side chains: block format, assignment lifecycle, voting, forks, 1D flattening."""

from __future__ import annotations

import hmac
import json
from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import IntEnum
from typing import Iterable, Mapping, Sequence

from .encoding import ZERO_DIGEST, Encoder, merkle_root, sha256
from .errors import (
    ChainClosedError,
    ComplianceError,
    IntegrityError,
    OpenAssignmentsError,
    StateTransitionError,
    ValidationError,
)
from .money import ZERO, cftx

VERSION_TAG = b"BCv1"


class AssignType(IntEnum):
    NULL = 0  # token-only transfer
    COMPUTING = 1
    STORAGE = 2


class TranState(IntEnum):
    INITIATION = 1
    ACCEPTANCE = 2
    COMPLETION = 3
    CLOSE = 4


class VoteType(IntEnum):
    PREPARE = 1
    COMMIT = 2


class Signer:
    """Deterministic keyed-digest signatures.

    Enough to attribute votes and detect equivocation inside the simulator;
    not meant to resist a real adversary.
    """

    def __init__(self, secret: bytes = b"blockcloud"):
        self._secret = secret

    def _key(self, address: str) -> bytes:
        return sha256(self._secret + address.encode())

    def sign(self, address: str, message: bytes) -> bytes:
        return hmac.new(self._key(address), message, "sha256").digest()

    def verify(self, address: str, message: bytes, signature: bytes) -> bool:
        return hmac.compare_digest(self.sign(address, message), signature)


DEFAULT_SIGNER = Signer()


@dataclass(frozen=True)
class BlockHeader:
    height: int
    parent_hash: bytes
    ts: int
    tnad: str
    thad: str
    epoch: int
    b_timer: int
    assign_num: int
    state_root: bytes = ZERO_DIGEST
    tx_root: bytes = ZERO_DIGEST
    receipts_root: bytes = ZERO_DIGEST

    def encode(self) -> bytes:
        return (
            Encoder()
            .i64(self.height).digest(self.parent_hash).i64(self.ts)
            .text(self.tnad).text(self.thad).i64(self.epoch).i64(self.b_timer)
            .i64(self.assign_num).digest(self.state_root).digest(self.tx_root)
            .digest(self.receipts_root)
            .bytes()
        )


@dataclass(frozen=True)
class CftxIndex:
    global_wealth: Decimal = ZERO
    task_wealth: Decimal = ZERO
    th_wealth: Decimal = ZERO
    t_relevancy: float = 0.0

    def __post_init__(self) -> None:
        for name in ("global_wealth", "task_wealth", "th_wealth"):
            object.__setattr__(self, name, cftx(getattr(self, name)))

    def encode(self) -> bytes:
        return (
            Encoder()
            .amount(self.global_wealth).amount(self.task_wealth).amount(self.th_wealth)
            .f64(self.t_relevancy)
            .bytes()
        )


@dataclass(frozen=True)
class Transaction:
    assign_type: AssignType
    assign_id: str
    assign_wealth: Decimal
    tran_state: TranState
    from_addr: str
    to_addr: str
    value: Decimal = ZERO
    data: bytes = b""
    signature: bytes = b""
    gas: int = 0
    gas_price: int = 0
    nonce: int = 0
    t_timer: int = 0
    abandoned: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "assign_wealth", cftx(self.assign_wealth))
        object.__setattr__(self, "value", cftx(self.value))
        object.__setattr__(self, "assign_type", AssignType(self.assign_type))
        object.__setattr__(self, "tran_state", TranState(self.tran_state))
        if self.value < 0:
            raise ValidationError(f"transaction value must be >= 0, got {self.value}")

    def signing_bytes(self) -> bytes:
        return (
            Encoder()
            .u8(self.assign_type).text(self.assign_id).amount(self.assign_wealth)
            .u8(self.tran_state).text(self.from_addr).text(self.to_addr)
            .amount(self.value).blob(self.data)
            .bytes()
        )

    def encode(self) -> bytes:
        return (
            Encoder()
            .raw(self.signing_bytes()).blob(self.signature)
            .i64(self.gas).i64(self.gas_price).i64(self.nonce).i64(self.t_timer)
            .u8(int(self.abandoned))
            .bytes()
        )

    def hash(self) -> bytes:
        return sha256(self.encode())

    def signed(self, signer: Signer = DEFAULT_SIGNER) -> "Transaction":
        return replace(self, signature=signer.sign(self.from_addr, self.signing_bytes()))


@dataclass(frozen=True)
class Vote:
    type_bft: str
    from_addr: str
    vote_hash: bytes
    hv: int
    hvs: int
    vote_type: VoteType
    signature: bytes = b""
    chain_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "vote_type", VoteType(self.vote_type))
        if self.hv <= self.hvs:
            raise ValidationError(f"vote heights need hv > hvs, got {self.hv} <= {self.hvs}")

    def signing_bytes(self) -> bytes:
        return (
            Encoder()
            .text(self.type_bft).text(self.from_addr).digest(self.vote_hash)
            .i64(self.hv).i64(self.hvs).u8(self.vote_type).text(self.chain_id)
            .bytes()
        )

    def encode(self) -> bytes:
        return Encoder().raw(self.signing_bytes()).blob(self.signature).bytes()

    def signed(self, signer: Signer = DEFAULT_SIGNER) -> "Vote":
        return replace(self, signature=signer.sign(self.from_addr, self.signing_bytes()))

    def verify(self, signer: Signer = DEFAULT_SIGNER) -> bool:
        return signer.verify(self.from_addr, self.signing_bytes(), self.signature)


@dataclass(frozen=True)
class VersionCode:
    hash: bytes = ZERO_DIGEST
    code: bytes = b""
    ini_block: int = 0
    signature: bytes = b""
    version: int = 1
    nonce: int = 0

    def encode(self) -> bytes:
        return (
            Encoder()
            .digest(self.hash).blob(self.code).i64(self.ini_block)
            .blob(self.signature).i64(self.version).i64(self.nonce)
            .bytes()
        )


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    cftx_index: CftxIndex
    transactions: tuple[Transaction, ...]
    votes: tuple[Vote, ...] = ()
    version_code: VersionCode = field(default_factory=VersionCode)

    def __post_init__(self) -> None:
        object.__setattr__(self, "transactions", tuple(self.transactions))
        object.__setattr__(self, "votes", tuple(self.votes))

    @property
    def height(self) -> int:
        return self.header.height

    def with_votes(self, votes: Iterable[Vote]) -> "Block":
        return replace(self, votes=tuple(votes))


def serialize_block(block: Block, *, include_votes: bool = True) -> bytes:
    """Bit-exact encoding in field order: header, CFTX index, transactions, votes, version code.

    Votes name the block by its hash, so the hashed form leaves them out.
    """
    enc = (
        Encoder()
        .raw(VERSION_TAG)
        .raw(block.header.encode())
        .raw(block.cftx_index.encode())
        .seq([t.encode() for t in block.transactions])
    )
    if include_votes:
        enc.seq([v.encode() for v in block.votes])
    return enc.raw(block.version_code.encode()).bytes()


def canonical_hash(block: Block) -> bytes:
    return sha256(serialize_block(block, include_votes=False))


def tx_root(transactions: Sequence[Transaction]) -> bytes:
    return merkle_root(t.hash() for t in transactions)


def check_block(block: Block) -> None:
    """Structural invariants that do not depend on the chain."""
    if block.header.tx_root != tx_root(block.transactions):
        raise IntegrityError("tx_root does not match transactions")
    distinct = len({t.assign_id for t in block.transactions})
    if block.header.assign_num != distinct:
        raise IntegrityError(f"assign_num {block.header.assign_num} != {distinct} assignments")


@dataclass(frozen=True)
class AssignmentSpec:
    assign_id: str
    assign_type: AssignType = AssignType.COMPUTING
    assign_wealth: Decimal = ZERO
    to_addr: str = ""
    value: Decimal = ZERO
    data: bytes = b""
    t_timer: int = 0


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    tnad: str
    thad: str
    assignments: tuple[AssignmentSpec, ...]
    ts: int = 0
    b_timer: int = 0
    cftx_index: CftxIndex = field(default_factory=CftxIndex)
    state_root: bytes = ZERO_DIGEST
    receipts_root: bytes = ZERO_DIGEST


def _check_task_spec(spec: TaskSpec) -> None:
    problems = []
    if not spec.task_id:
        problems.append("task_id missing")
    if not spec.tnad:
        problems.append("tasking-node address (tnad) missing")
    if not spec.thad:
        problems.append("task-handler address (thad) missing")
    if not spec.assignments:
        problems.append("task has no assignments")
    ids = [a.assign_id for a in spec.assignments]
    if len(set(ids)) != len(ids):
        problems.append("duplicate assignment ids")
    if any(not i for i in ids):
        problems.append("empty assignment id")
    if spec.b_timer < spec.ts:
        problems.append("b_timer precedes the task timestamp")
    for a in spec.assignments:
        if cftx(a.value) < 0 or cftx(a.assign_wealth) < 0:
            problems.append(f"assignment {a.assign_id} has a negative amount")
    if problems:
        raise ComplianceError("; ".join(problems))


def _make_block(height: int, parent_hash: bytes, ts: int, tnad: str, thad: str, epoch: int,
                b_timer: int, txs: Sequence[Transaction], index: CftxIndex,
                state_root: bytes = ZERO_DIGEST, receipts_root: bytes = ZERO_DIGEST) -> Block:
    header = BlockHeader(
        height=height, parent_hash=parent_hash, ts=ts, tnad=tnad, thad=thad, epoch=epoch,
        b_timer=b_timer, assign_num=len({t.assign_id for t in txs}),
        state_root=state_root, tx_root=tx_root(txs), receipts_root=receipts_root,
    )
    return Block(header, index, tuple(txs))


def propose_root_block(spec: TaskSpec, signer: Signer = DEFAULT_SIGNER) -> Block:
    """Root block of a task: one initiation transaction per assignment."""
    _check_task_spec(spec)
    txs = [
        Transaction(
            assign_type=a.assign_type, assign_id=a.assign_id, assign_wealth=a.assign_wealth,
            tran_state=TranState.INITIATION, from_addr=spec.tnad, to_addr=a.to_addr or spec.thad,
            value=a.value, data=a.data, nonce=i, t_timer=a.t_timer,
        ).signed(signer)
        for i, a in enumerate(spec.assignments)
    ]
    return _make_block(0, ZERO_DIGEST, spec.ts, spec.tnad, spec.thad, 0, spec.b_timer, txs,
                       spec.cftx_index, spec.state_root, spec.receipts_root)


@dataclass
class AssignmentStatus:
    state: TranState
    abandoned: bool = False
    template: Transaction | None = None


@dataclass
class SideChain:
    """The blocks of one task, from its root to (eventually) its final block."""

    task_id: str
    blocks: list[Block] = field(default_factory=list)
    closed: bool = False
    status: dict[str, AssignmentStatus] = field(default_factory=dict)
    hashes: list[bytes] = field(default_factory=list)

    @classmethod
    def from_root(cls, task_id: str, root: Block) -> "SideChain":
        chain = cls(task_id)
        chain.append(root)
        return chain

    @property
    def root(self) -> Block:
        return self.blocks[0]

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def tip_hash(self) -> bytes:
        return self.hashes[-1]

    def __len__(self) -> int:
        return len(self.blocks)

    def validate_next(self, block: Block) -> None:
        """Raise unless ``block`` may be appended right now."""
        if self.closed:
            raise ChainClosedError(f"side chain {self.task_id} is closed")
        check_block(block)
        if not self.blocks:
            if block.height != 0 or block.header.parent_hash != ZERO_DIGEST:
                raise IntegrityError("root block must have height 0 and a zero parent hash")
            for t in block.transactions:
                if t.tran_state != TranState.INITIATION:
                    raise StateTransitionError("root block transactions must be in initiation")
            return
        if block.height != self.tip.height + 1:
            raise IntegrityError(f"height {block.height} does not follow {self.tip.height}")
        if block.header.parent_hash != self.tip_hash:
            raise IntegrityError("parent hash does not match the chain tip")
        for t in block.transactions:
            cur = self.status.get(t.assign_id)
            if cur is None:
                raise StateTransitionError(f"unknown assignment {t.assign_id}")
            _check_transition(t.assign_id, cur, t.tran_state, t.abandoned)

    def append(self, block: Block) -> None:
        self.validate_next(block)
        self.blocks.append(block)
        self.hashes.append(canonical_hash(block))
        for t in block.transactions:
            self.status[t.assign_id] = AssignmentStatus(t.tran_state, t.abandoned, t)
        if block.transactions and all(t.tran_state == TranState.CLOSE for t in block.transactions) \
                and len(block.transactions) == len(self.status):
            self.closed = True

    def verify_links(self) -> bool:
        prev = ZERO_DIGEST
        for i, b in enumerate(self.blocks):
            if b.height != i or b.header.parent_hash != prev:
                return False
            prev = canonical_hash(b)
            if prev != self.hashes[i]:
                return False
        return True

    def states(self) -> dict[str, tuple[TranState, bool]]:
        return {k: (s.state, s.abandoned) for k, s in self.status.items()}

    def to_records(self) -> list[dict]:
        return [block_record(self.task_id, b) for b in self.blocks]


def _check_transition(assign_id: str, cur: AssignmentStatus, new: TranState, abandoned: bool) -> None:
    if cur.state == TranState.CLOSE:
        raise StateTransitionError(f"{assign_id} is already closed")
    if cur.abandoned:
        if new not in (cur.state, TranState.CLOSE) or not abandoned:
            raise StateTransitionError(f"{assign_id} was abandoned; only close is allowed")
        return
    if new < cur.state:
        raise StateTransitionError(f"{assign_id}: {cur.state.name} -> {new.name} goes backward")
    if new == TranState.CLOSE:
        if abandoned:
            return
        if cur.state != TranState.COMPLETION:
            raise StateTransitionError(f"{assign_id}: close before completion")
        return
    if new - cur.state > 1:
        raise StateTransitionError(f"{assign_id}: {cur.state.name} -> {new.name} skips a state")


def build_next_block(chain: SideChain, updates: Mapping[str, TranState], ts: int, *,
                     abandoned: Iterable[str] = (), index: CftxIndex | None = None,
                     signer: Signer = DEFAULT_SIGNER) -> Block:
    """Next block for ``chain`` recording every assignment's current state.

    Assignments not named in ``updates`` keep their state.  Nothing is
    appended; the caller runs consensus first.
    """
    if chain.closed:
        raise ChainClosedError(f"side chain {chain.task_id} is closed")
    if not chain.blocks:
        raise IntegrityError("chain has no root block")
    abandoned = set(abandoned)
    unknown = (set(updates) | abandoned) - set(chain.status)
    if unknown:
        raise StateTransitionError(f"unknown assignments {sorted(unknown)}")
    tip = chain.tip
    txs = []
    for assign_id, st in chain.status.items():
        new_state = updates.get(assign_id, st.state)
        is_abandoned = st.abandoned or assign_id in abandoned
        _check_transition(assign_id, st, new_state, is_abandoned)
        tmpl = st.template
        txs.append(replace(tmpl, tran_state=new_state, abandoned=is_abandoned,
                           nonce=tmpl.nonce).signed(signer))
    return _make_block(
        tip.height + 1, chain.tip_hash, ts, tip.header.tnad, tip.header.thad,
        tip.header.epoch + 1, tip.header.b_timer, txs, index or tip.cftx_index,
        tip.header.state_root, tip.header.receipts_root,
    )


def append_status_block(chain: SideChain, updates: Mapping[str, TranState], ts: int, *,
                        abandoned: Iterable[str] = (), index: CftxIndex | None = None,
                        signer: Signer = DEFAULT_SIGNER) -> SideChain:
    block = build_next_block(chain, updates, ts, abandoned=abandoned, index=index, signer=signer)
    chain.append(block)
    return chain


def build_final_block(chain: SideChain, ts: int, *, index: CftxIndex | None = None,
                      signer: Signer = DEFAULT_SIGNER) -> Block:
    open_ = [k for k, s in chain.status.items()
             if not s.abandoned and s.state != TranState.COMPLETION]
    if open_:
        raise OpenAssignmentsError(f"assignments still open: {sorted(open_)}")
    updates = {k: TranState.CLOSE for k in chain.status}
    return build_next_block(chain, updates, ts, index=index, signer=signer)


def close_task(chain: SideChain, ts: int, final_updates: Mapping[str, TranState] | None = None, *,
               abandoned: Iterable[str] = (), index: CftxIndex | None = None,
               signer: Signer = DEFAULT_SIGNER) -> SideChain:
    if final_updates or abandoned:
        append_status_block(chain, final_updates or {}, ts, abandoned=abandoned, index=index,
                            signer=signer)
    chain.append(build_final_block(chain, ts, index=index, signer=signer))
    return chain


def fork_select(branches: Sequence[Sequence[Block]]) -> Sequence[Block]:
    """Branch with the most task wealth from the fork point on; ties go to the smaller tip hash."""
    if not branches:
        raise ValidationError("fork_select needs at least one branch")

    def key(branch):
        wealth = sum((b.cftx_index.task_wealth for b in branch), ZERO)
        return (-wealth, canonical_hash(branch[-1]))

    return min(branches, key=key)


def fault_tolerance(n: int) -> int:
    return (n - 1) // 3


def quorum_size(n: int) -> int:
    return 2 * n // 3 + 1


def quorum(n_validators: int, votes_received: int, stage: VoteType = VoteType.PREPARE,
           prepare_reached: bool = True) -> bool:
    """Whether ``votes_received`` of ``n_validators`` makes a quorum for ``stage``.

    Commit votes only count once the Prepare stage reached its quorum.
    """
    if not 0 <= votes_received <= n_validators:
        raise ValidationError(f"votes {votes_received} out of range for n={n_validators}")
    if VoteType(stage) == VoteType.COMMIT and not prepare_reached:
        return False
    return votes_received >= quorum_size(n_validators)


def may_start_next(prepare_reached_for_current: bool) -> bool:
    """Pipelining: the next block's Prepare may begin after this block's Prepare quorum."""
    return prepare_reached_for_current


@dataclass(frozen=True)
class EquivocationEvidence:
    voter: str
    chain_id: str
    height: int
    vote_type: VoteType
    first: Vote
    second: Vote

    def verify(self, signer: Signer = DEFAULT_SIGNER) -> bool:
        a, b = self.first, self.second
        return (
            a.from_addr == b.from_addr == self.voter
            and a.hv == b.hv == self.height
            and a.chain_id == b.chain_id == self.chain_id
            and a.vote_type == b.vote_type == self.vote_type
            and a.vote_hash != b.vote_hash
            and a.verify(signer) and b.verify(signer)
        )


def find_equivocations(votes: Iterable[Vote], signer: Signer = DEFAULT_SIGNER,
                       vote_type: VoteType | None = VoteType.PREPARE) -> list[EquivocationEvidence]:
    """Pairs of validly signed votes by one voter for two hashes at one height."""
    seen: dict[tuple, Vote] = {}
    found: dict[tuple, EquivocationEvidence] = {}
    for v in votes:
        if vote_type is not None and v.vote_type != vote_type:
            continue
        if not v.verify(signer):
            continue
        key = (v.from_addr, v.chain_id, v.hv, v.vote_type)
        first = seen.setdefault(key, v)
        if first.vote_hash != v.vote_hash and key not in found:
            found[key] = EquivocationEvidence(v.from_addr, v.chain_id, v.hv, v.vote_type, first, v)
    return [found[k] for k in sorted(found, key=lambda k: (k[1], k[2], k[0], int(k[3])))]


@dataclass
class VoteTally:
    """Distinct-voter counts per (height, block hash) and stage."""

    n: int
    votes: dict[tuple[int, bytes, VoteType], dict[str, Vote]] = field(default_factory=dict)

    def add(self, vote: Vote) -> int:
        bucket = self.votes.setdefault((vote.hv, vote.vote_hash, vote.vote_type), {})
        bucket.setdefault(vote.from_addr, vote)
        return len(bucket)

    def count(self, height: int, block_hash: bytes, stage: VoteType) -> int:
        return len(self.votes.get((height, block_hash, stage), {}))

    def reached(self, height: int, block_hash: bytes, stage: VoteType) -> bool:
        prepared = self.count(height, block_hash, VoteType.PREPARE) >= quorum_size(self.n)
        return quorum(self.n, self.count(height, block_hash, stage), stage, prepared)

    def certificate(self, height: int, block_hash: bytes, stage: VoteType) -> list[Vote]:
        bucket = self.votes.get((height, block_hash, stage), {})
        return [bucket[k] for k in sorted(bucket)]


@dataclass(frozen=True)
class FlatChain:
    entries: tuple[tuple[str, Block], ...]
    root: bytes

    def block_hashes(self) -> list[bytes]:
        return [canonical_hash(b) for _, b in self.entries]


def flatten(chains: Mapping[str, SideChain | Sequence[Block]]) -> FlatChain:
    """Interleave every side chain into one sequence ordered by (ts, chain id, height)."""
    entries = []
    for chain_id, chain in chains.items():
        blocks = chain.blocks if isinstance(chain, SideChain) else chain
        entries.extend((chain_id, b) for b in blocks)
    entries.sort(key=lambda e: (e[1].header.ts, e[0], e[1].height))
    return FlatChain(tuple(entries), merkle_root(canonical_hash(b) for _, b in entries))


def reconstruct(flat: FlatChain) -> dict[str, list[Block]]:
    out: dict[str, list[Block]] = {}
    for chain_id, block in flat.entries:
        out.setdefault(chain_id, []).append(block)
    for chain_id, blocks in out.items():
        prev = ZERO_DIGEST
        for i, b in enumerate(blocks):
            if b.height != i or b.header.parent_hash != prev:
                raise IntegrityError(f"chain {chain_id} breaks at height {i}")
            prev = canonical_hash(b)
    return out


def block_record(chain_id: str, block: Block) -> dict:
    h = block.header
    return {
        "chain": chain_id,
        "height": h.height,
        "hash": canonical_hash(block).hex(),
        "parent": h.parent_hash.hex(),
        "ts": h.ts,
        "tnad": h.tnad,
        "thad": h.thad,
        "epoch": h.epoch,
        "assign_num": h.assign_num,
        "task_wealth": str(block.cftx_index.task_wealth),
        "tx": [[t.assign_id, t.tran_state.name, t.abandoned] for t in block.transactions],
        "votes": len(block.votes),
    }


def dump_chain(chain: SideChain) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in chain.to_records())
