import hashlib
import random
import struct
from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from blockcloud.chain import (
    AssignmentSpec,
    AssignType,
    CftxIndex,
    SideChain,
    TaskSpec,
    TranState,
    Vote,
    VoteTally,
    VoteType,
    append_status_block,
    build_next_block,
    canonical_hash,
    close_task,
    fault_tolerance,
    find_equivocations,
    flatten,
    fork_select,
    propose_root_block,
    quorum,
    quorum_size,
    reconstruct,
    serialize_block,
)
from blockcloud.encoding import ZERO_DIGEST, merkle_root
from blockcloud.errors import (
    ChainClosedError,
    ComplianceError,
    IntegrityError,
    OpenAssignmentsError,
    StateTransitionError,
    ValidationError,
)

GOLDEN = "d38ddea3936dadc3cf34f3a8c5a075ecd7a08b5f11172cc164c369d499f19498"


def reference_spec():
    return TaskSpec(
        "t1", "tasker", "handler",
        (
            AssignmentSpec("a1", AssignType.COMPUTING, Decimal("12.5"), "r1", Decimal("3"), b"\x01\x02", 2_000_000),
            AssignmentSpec("a2", AssignType.NULL, Decimal("0"), "bob", Decimal("7.25")),
        ),
        ts=1000, b_timer=10_001_000,
        cftx_index=CftxIndex(Decimal("3050000"), Decimal("100"), Decimal("5"), 0.39125),
    )


def task(n_assign=1, task_id="t", ts=0, wealth=0):
    return TaskSpec(task_id, "tn", "th",
                    tuple(AssignmentSpec(f"{task_id}-a{i}") for i in range(n_assign)),
                    ts=ts, b_timer=ts + 10**7, cftx_index=CftxIndex(task_wealth=Decimal(wealth)))


class TestHashing:
    def test_golden(self):
        assert canonical_hash(propose_root_block(reference_spec())).hex() == GOLDEN

    def test_deterministic(self):
        a = propose_root_block(reference_spec())
        b = propose_root_block(reference_spec())
        assert serialize_block(a) == serialize_block(b)
        assert canonical_hash(a) == canonical_hash(b)

    def test_header_bit_flip(self):
        from dataclasses import replace
        b = propose_root_block(reference_spec())
        flipped = replace(b, header=replace(b.header, ts=b.header.ts ^ 1))
        assert canonical_hash(flipped) != canonical_hash(b)

    def test_header_layout(self):
        b = propose_root_block(reference_spec())
        raw = serialize_block(b)
        h = b.header
        # hand-packed prefix: tag, height, parent, ts, len-prefixed tnad
        expected = (b"BCv1" + struct.pack(">q", 0) + bytes(32) + struct.pack(">q", 1000)
                    + struct.pack(">I", 6) + b"tasker")
        assert raw.startswith(expected)
        assert h.tx_root == merkle_root([t.hash() for t in b.transactions])

    def test_votes_excluded_from_hash(self):
        b = propose_root_block(reference_spec())
        v = Vote("PBFT", "x", canonical_hash(b), 0, -1, VoteType.PREPARE).signed()
        assert canonical_hash(b.with_votes([v])) == canonical_hash(b)
        assert serialize_block(b.with_votes([v])) != serialize_block(b)


def test_merkle_oracle():
    leaves = [hashlib.sha256(bytes([i])).digest() for i in range(5)]
    h = lambda a, b: hashlib.sha256(a + b).digest()
    l1 = [h(leaves[0], leaves[1]), h(leaves[2], leaves[3]), h(leaves[4], leaves[4])]
    l2 = [h(l1[0], l1[1]), h(l1[2], l1[2])]
    assert merkle_root(leaves) == h(l2[0], l2[1])
    assert merkle_root([]) == ZERO_DIGEST
    assert merkle_root(leaves[:1]) == leaves[0]


class TestRootBlock:
    def test_one_assignment(self):
        b = propose_root_block(task(1))
        assert b.header.assign_num == 1 and b.height == 0 and b.header.parent_hash == ZERO_DIGEST

    def test_three_assignments(self):
        b = propose_root_block(task(3))
        assert [t.tran_state for t in b.transactions] == [TranState.INITIATION] * 3

    def test_missing_tnad(self):
        from dataclasses import replace
        with pytest.raises(ComplianceError):
            propose_root_block(replace(task(1), tnad=""))

    def test_no_assignments(self):
        from dataclasses import replace
        with pytest.raises(ComplianceError):
            propose_root_block(replace(task(1), assignments=()))


def walk(states):
    """Oracle: legal iff every step stays or advances by one, and close follows completion."""
    cur = 1
    for s in states:
        if s < cur or s - cur > 1:
            return False
        cur = s
    return True


class TestLifecycle:
    def test_forward_step(self):
        c = SideChain.from_root("t", propose_root_block(task(1)))
        append_status_block(c, {"t-a0": TranState.ACCEPTANCE}, 1)
        assert c.states()["t-a0"] == (TranState.ACCEPTANCE, False)

    def test_close_before_completion(self):
        c = SideChain.from_root("t", propose_root_block(task(1)))
        append_status_block(c, {"t-a0": TranState.ACCEPTANCE}, 1)
        with pytest.raises(StateTransitionError):
            append_status_block(c, {"t-a0": TranState.CLOSE}, 2)
        with pytest.raises(OpenAssignmentsError):
            close_task(c, 2)

    def test_full_lifecycle(self):
        c = SideChain.from_root("t", propose_root_block(task(1)))
        append_status_block(c, {"t-a0": TranState.ACCEPTANCE}, 1)
        append_status_block(c, {"t-a0": TranState.COMPLETION}, 2)
        close_task(c, 3)
        seen = [b.transactions[0].tran_state for b in c.blocks]
        assert seen == [1, 2, 3, 4] and walk(seen)
        assert c.closed and c.verify_links()

    def test_backward_rejected(self):
        c = SideChain.from_root("t", propose_root_block(task(1)))
        append_status_block(c, {"t-a0": TranState.ACCEPTANCE}, 1)
        with pytest.raises(StateTransitionError):
            append_status_block(c, {"t-a0": TranState.INITIATION}, 2)

    def test_closed_is_immutable(self):
        c = SideChain.from_root("t", propose_root_block(task(1)))
        append_status_block(c, {"t-a0": TranState.ACCEPTANCE}, 1)
        append_status_block(c, {"t-a0": TranState.COMPLETION}, 2)
        close_task(c, 3)
        with pytest.raises(ChainClosedError):
            append_status_block(c, {}, 4)
        with pytest.raises(ChainClosedError):
            c.append(c.tip)

    def test_mixed_complete_abandoned(self):
        c = SideChain.from_root("t", propose_root_block(task(3)))
        append_status_block(c, {"t-a0": TranState.ACCEPTANCE, "t-a1": TranState.ACCEPTANCE}, 1,
                            abandoned=["t-a2"])
        append_status_block(c, {"t-a0": TranState.COMPLETION}, 2, abandoned=["t-a1"])
        states = c.states()
        assert all(s == TranState.COMPLETION or ab for s, ab in states.values())
        close_task(c, 3)
        assert c.closed
        final = {t.assign_id: (t.tran_state, t.abandoned) for t in c.tip.transactions}
        assert final == {"t-a0": (4, False), "t-a1": (4, True), "t-a2": (4, True)}

    def test_tampered_parent(self):
        from dataclasses import replace
        c = SideChain.from_root("t", propose_root_block(task(1)))
        b = build_next_block(c, {"t-a0": TranState.ACCEPTANCE}, 1)
        bad = replace(b, header=replace(b.header, parent_hash=bytes(32)))
        with pytest.raises(IntegrityError):
            c.append(bad)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(1, 4), max_size=8))
    def test_random_updates_never_out_of_order(self, seq):
        c = SideChain.from_root("t", propose_root_block(task(1)))
        applied = [1]
        for s in seq:
            try:
                append_status_block(c, {"t-a0": TranState(s)}, len(applied))
            except (StateTransitionError, ChainClosedError):
                continue
            applied.append(s)
        assert walk(applied[1:])
        recorded = [b.transactions[0].tran_state for b in c.blocks]
        assert recorded == applied
        assert c.verify_links()


class TestForkSelect:
    def branch(self, wealths, tag):
        c = SideChain.from_root(tag, propose_root_block(task(1, task_id=tag, wealth=wealths[0])))
        for i, w in enumerate(wealths[1:], 1):
            append_status_block(c, {}, i, index=CftxIndex(task_wealth=Decimal(w)))
        return c.blocks

    def test_heavier_wins(self):
        a, b = self.branch([5, 3], "a"), self.branch([4, 5], "b")
        assert sum(x.cftx_index.task_wealth for x in b) == 9
        assert fork_select([a, b]) is b

    def test_single(self):
        a = self.branch([1], "a")
        assert fork_select([a]) is a

    def test_tie_smaller_tip_hash(self):
        a, b = self.branch([2, 2], "a"), self.branch([1, 3], "b")
        expected = min([a, b], key=lambda br: canonical_hash(br[-1]))
        assert fork_select([a, b]) is expected
        assert fork_select([b, a]) is expected


class TestQuorum:
    def test_sizes(self):
        assert quorum(4, 3, VoteType.PREPARE)
        assert not quorum(4, 2, VoteType.PREPARE)
        assert fault_tolerance(4) == 1
        assert [quorum_size(n) for n in (4, 7, 10)] == [3, 5, 7]

    @pytest.mark.parametrize("n", range(1, 40))
    def test_tolerance_matches_bound(self, n):
        f = fault_tolerance(n)
        assert n >= 3 * f + 1
        # two quorums share more than f members, so an honest one
        assert 2 * quorum_size(n) - n >= f + 1
        assert n - f >= quorum_size(n) or n < 3

    def test_commit_waits_for_prepare(self):
        assert not quorum(4, 4, VoteType.COMMIT, prepare_reached=False)
        assert quorum(4, 3, VoteType.COMMIT, prepare_reached=True)

    def test_bounds(self):
        with pytest.raises(ValidationError):
            quorum(4, 5)

    def test_tally_and_evidence(self):
        h1, h2 = bytes([1]) * 32, bytes([2]) * 32
        tally = VoteTally(4)
        votes = [Vote("PBFT", v, h1, 3, 2, VoteType.PREPARE, chain_id="c").signed() for v in "abc"]
        votes.append(Vote("PBFT", "a", h2, 3, 2, VoteType.PREPARE, chain_id="c").signed())
        for v in votes:
            tally.add(v)
        assert tally.reached(3, h1, VoteType.PREPARE)
        assert not tally.reached(3, h2, VoteType.PREPARE)
        assert not tally.reached(3, h1, VoteType.COMMIT)
        ev = find_equivocations(votes)
        assert len(ev) == 1 and ev[0].voter == "a" and ev[0].verify()

    def test_forged_signature_is_not_evidence(self):
        h1, h2 = bytes([1]) * 32, bytes([2]) * 32
        good = Vote("PBFT", "a", h1, 1, 0, VoteType.PREPARE).signed()
        forged = Vote("PBFT", "a", h2, 1, 0, VoteType.PREPARE, signature=b"x" * 32)
        assert find_equivocations([good, forged]) == []

    def test_vote_heights(self):
        with pytest.raises(ValidationError):
            Vote("PBFT", "a", bytes(32), 1, 1, VoteType.PREPARE)


def build_chains(rng, n_chains):
    chains = {}
    for c in range(n_chains):
        cid = f"c{c}"
        ts = rng.randint(0, 50)
        chain = SideChain.from_root(cid, propose_root_block(task(rng.randint(1, 3), task_id=cid, ts=ts)))
        for step in (TranState.ACCEPTANCE, TranState.COMPLETION):
            ts += rng.randint(0, 20)
            append_status_block(chain, {k: step for k in chain.status}, ts)
        if rng.random() < 0.5:
            close_task(chain, ts + rng.randint(0, 20))
        chains[cid] = chain
    return chains


class TestFlatten:
    def test_empty(self):
        flat = flatten({})
        assert flat.entries == () and flat.root == ZERO_DIGEST

    def test_single_chain_order(self):
        chains = build_chains(random.Random(1), 1)
        flat = flatten(chains)
        assert [b for _, b in flat.entries] == chains["c0"].blocks

    @pytest.mark.parametrize("seed", range(10))
    def test_round_trip(self, seed):
        chains = build_chains(random.Random(seed), 5)
        flat = flatten(chains)
        keys = [(b.header.ts, cid, b.height) for cid, b in flat.entries]
        assert keys == sorted(keys)
        back = reconstruct(flat)
        assert back == {k: v.blocks for k, v in chains.items()}
        assert flat.root == merkle_root(flat.block_hashes())
