import copy
import json
import os
import subprocess
import sys
from decimal import Decimal

import pytest
from hypothesis import given, settings, strategies as st

from blockcloud.chain import ZERO_DIGEST, canonical_hash
from blockcloud.config import parse_config
from blockcloud.errors import ValidationError
from blockcloud.sim import (
    AssignmentProgress, EventLoop, Shard, assignment_retry, attack_51, attack_double_spend,
    attack_shard_takeover, attack_short_range, run_consensus, run_scenario, simulate, tasker_decision,
)

BASE = {
    "seed": 1,
    "nodes": [{"id": f"s{i}", "role": "super"} for i in range(4)] + [
        {"id": "t", "role": "tasking"}, {"id": "c0", "role": "computing"}, {"id": "c1", "role": "computing"}],
    "tasks": [{"id": "x", "tasker": "t"}],
}


def scenario(**changes):
    raw = copy.deepcopy(BASE)
    raw.update(changes)
    return parse_config(raw)


def supply(summary):
    return {k: Decimal(v) for k, v in summary["supply"].items()}


def test_no_tasks_keeps_genesis():
    summary, lines = run_scenario(scenario(tasks=[]))
    s = supply(summary)
    assert summary["blocks"] == 0
    assert s["circulating"] == s["genesis"] == Decimal(7000)
    assert s["issued"] == s["burned"] == 0
    assert len(lines) == 1


def test_single_honest_task_end_to_end():
    r = simulate(scenario())
    assert r.ok and r.summary["finalized_tasks"] == 1
    chain = r.tasks["x"].chain
    assert len(chain) >= 4
    # independent link check: heights count up and each parent is the previous digest
    prev = ZERO_DIGEST
    for h, block in enumerate(chain.blocks):
        assert block.header.height == h
        assert block.header.parent_hash == prev
        prev = canonical_hash(block)
    s = supply(r.summary)
    assert s["circulating"] == s["genesis"] + s["issued"] - s["burned"]
    assert r.credit.ecosystem_total == s["circulating"]
    closed = [json.loads(l) for l in r.log if '"task-closed"' in l][0]
    awarded = sum(Decimal(v) for v in closed["awards"].values())
    assert awarded + Decimal(closed["unawarded"]) == Decimal(closed["issued"])
    assert r.summary["invariants"] == {"conservation": True, "safety": True, "liveness": True}


def test_shard_dissolves_with_task():
    r = simulate(scenario())
    shard = r.tasks["x"].shard
    assert shard.open is False and shard.handler in shard.validators


def test_shard_handler_must_validate():
    with pytest.raises(ValidationError):
        Shard("t", ("a", "b"), "c")


def test_same_seed_same_log():
    a = run_scenario(scenario(), 5)[1]
    b = run_scenario(scenario(), 5)[1]
    assert a == b
    assert run_scenario(scenario(), 6)[1] != a


def test_log_independent_of_hash_seed(tmp_path):
    cfg = tmp_path / "s.json"
    cfg.write_text(json.dumps(BASE))
    code = ("import sys; from blockcloud.config import load_config; from blockcloud.sim import run_scenario;"
            "sys.stdout.write('\\n'.join(run_scenario(load_config(sys.argv[1]), 3)[1]))")
    outs = set()
    for hs in ("0", "1", "12345"):
        env = dict(os.environ, PYTHONHASHSEED=hs)
        outs.add(subprocess.run([sys.executable, "-c", code, str(cfg)], env=env, check=True,
                                capture_output=True, text=True).stdout)
    assert len(outs) == 1


def test_event_loop_orders_by_time_then_insertion():
    loop = EventLoop(0, 10, 10)
    seen = []
    loop.schedule(5, "k", "b")
    loop.schedule(1, "k", "a")
    loop.schedule(5, "k", "c")
    loop.run(lambda kind, p: seen.append(p))
    assert seen == ["a", "b", "c"]


class TestAssignmentRetry:
    RANK = ("n1", "n2", "n3", "n4", "n5")

    def test_enough_acks_proceed(self):
        p = AssignmentProgress(2, self.RANK, ("n1", "n2"), frozenset({"n1", "n2"}))
        assert assignment_retry(p).kind == "proceed"

    def test_partial_acks_top_up(self):
        p = AssignmentProgress(3, self.RANK, ("n1", "n2", "n3"), frozenset({"n2"}), round=1)
        act = assignment_retry(p)
        # set-difference oracle: untried nodes in rank order, only the shortfall
        untried = [n for n in self.RANK if n not in set(p.tried)]
        assert act.kind == "redistribute"
        assert act.targets == tuple(untried[:3 - 1])
        assert not set(act.targets) & set(p.acked)

    def test_rounds_exhausted_query(self):
        p = AssignmentProgress(1, self.RANK, ("n1",), frozenset(), round=3)
        assert assignment_retry(p).kind == "query"

    def test_nobody_left_query(self):
        p = AssignmentProgress(1, ("n1",), ("n1",), frozenset(), round=1)
        assert assignment_retry(p).kind == "query"

    def test_tasker_policies(self):
        p = AssignmentProgress(1, self.RANK, ("n1",), frozenset(), round=3)
        assert tasker_decision(p, "abandon").kind == "abandon"
        assert tasker_decision(p, "redistribute").targets == ("n2",)
        done = AssignmentProgress(1, ("n1",), ("n1",), frozenset(), round=3)
        assert tasker_decision(done, "redistribute").kind == "abandon"

    @given(st.integers(1, 5), st.sets(st.sampled_from(RANK)), st.integers(0, 4))
    def test_never_releases_acceptors(self, needed, tried, rnd):
        acked = frozenset(list(sorted(tried))[:needed - 1]) if needed > 1 else frozenset()
        p = AssignmentProgress(needed, self.RANK, tuple(sorted(tried)), acked, rnd)
        act = assignment_retry(p)
        assert not set(act.targets) & set(tried)
        assert len(act.targets) <= max(needed - len(acked), 0)


def test_silent_resources_abandon():
    r = simulate(scenario(behaviors={"c0": "silent", "c1": "silent"}))
    assert r.ok and r.summary["finalized_tasks"] == 1
    closed = [json.loads(l) for l in r.log if '"task-closed"' in l][0]
    assert closed["abandoned"] == ["a1"]
    assert supply(r.summary)["issued"] == 0


def test_silent_handler_expires():
    raw = copy.deepcopy(BASE)
    raw["tasks"][0]["handler"] = "s0"
    raw["behaviors"] = {"s0": "silent"}
    r = simulate(parse_config(raw))
    assert r.ok
    assert r.summary["expired_tasks"] == 1
    assert r.tasks["x"].shard.open is False


def test_injected_conservation_fault_is_reported():
    raw = copy.deepcopy(BASE)
    raw["inject_faults"] = {"conservation": True}
    r = simulate(parse_config(raw))
    assert not r.ok
    assert r.summary["invariants"]["conservation"] is False


def test_block_intervals_respect_latency():
    raw = copy.deepcopy(BASE)
    raw["latency"] = {"min_us": 20_000, "max_us": 30_000}
    r = simulate(parse_config(raw))
    ts = [b.header.ts for b in r.tasks["x"].chain.blocks]
    assert all(b - a >= 40_000 for a, b in zip(ts, ts[1:]))


@pytest.mark.parametrize("n", [4, 7, 10])
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32))
def test_safety_within_fault_bound(n, seed):
    f = (n - 1) // 3
    run = run_consensus(n, f, seed, heights=2)
    assert not run.forked


@pytest.mark.parametrize("n", [4, 7, 10])
def test_fork_beyond_bound_leaves_evidence(n):
    f = (n - 1) // 3
    for seed in range(20):
        run = run_consensus(n, f + 1, seed)
        assert run.forked and run.evidence


def test_mixed_faults_stay_safe():
    assert not any(run_consensus(7, 2, s, heights=3, mixed=True).forked for s in range(30))


@pytest.mark.parametrize("seed", range(3))
def test_double_spend(seed):
    v = attack_double_spend(seed)
    assert v.passed and v.ledger_equal and not v.details["both_finalized"]


def test_double_spend_colluding_handler():
    v = attack_double_spend(0, colluders=1)
    assert v.passed and v.ledger_equal


@pytest.mark.parametrize("seed", range(3))
def test_short_range(seed):
    v = attack_short_range(seed)
    assert v.passed and v.details["rewrite_attempts"] > 0


@pytest.mark.parametrize("seed", range(2))
def test_51_percent(seed):
    v = attack_51(seed)
    assert v.passed
    assert v.details["tariff_events"] > 0
    assert Decimal(v.details["max_wealth_share"]) < Decimal("0.51")


def test_shard_takeover():
    v = attack_shard_takeover(0)
    assert v.passed and v.details["landed_fraction"] < 1 / 3
