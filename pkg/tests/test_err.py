import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from blockcloud.err import (
    FactorScore,
    NodeRankingProfile,
    RankingTable,
    TaskRankingProfile,
    matchmake,
    node_err_score,
    task_err_score,
)
from blockcloud.errors import NoCandidateError, ValidationError

from conftest import NODE_DISPLAYED, TASK_DISPLAYED


def weighted_sum_oracle(scores, weights, norms):
    total = 0.0
    for s, w, n in zip(scores, weights, norms):
        total += w * s / n
    return total


@pytest.mark.parametrize("task_id,expected", [
    ("task-1", 0.39125), ("task-i", 0.5875), ("task-N", 0.4575),
])
def test_task_table(task_profiles, task_id, expected):
    got = task_err_score(task_profiles[task_id])
    assert got == pytest.approx(expected, abs=1e-12)
    assert abs(got - TASK_DISPLAYED[task_id]) <= 0.005


@pytest.mark.parametrize("node_id,expected", [
    ("super-1", 0.50), ("computing-1", 0.345), ("service-1", 0.695),
])
def test_node_table(node_profiles, node_id, expected):
    got = node_err_score(node_profiles[node_id])
    assert got == pytest.approx(expected, abs=1e-12)
    assert abs(got - NODE_DISPLAYED[node_id]) <= 0.005 + 1e-12


def test_weight_sum_enforced():
    with pytest.raises(ValidationError):
        NodeRankingProfile.from_columns((1, 1, 1), (0.5, 0.5, 0.5), (1, 1, 1))


def test_factor_count_enforced():
    with pytest.raises(ValidationError):
        TaskRankingProfile.from_columns((1, 1, 1), (0.5, 0.3, 0.2), (1, 1, 1))


@pytest.mark.parametrize("score,weight,norm", [(-1, 0.5, 1), (1, 1.2, 1), (1, 0.5, 0)])
def test_factor_invariants(score, weight, norm):
    with pytest.raises(ValidationError):
        FactorScore(score, weight, norm)


class TestMatchmake:
    def test_tables(self):
        cands = [("A", 0.50, 0), ("B", 0.345, 0), ("C", 0.695, 0)]
        # exhaustive oracle
        best = min(cands, key=lambda c: abs(c[1] - 0.39125))[0]
        assert best == "B"
        assert matchmake(0.39125, cands) == "B"

    def test_single(self):
        assert matchmake(0.9, [("N", 0.1, 100)]) == "N"

    def test_wealth_tiebreak(self):
        assert matchmake(0.39, [("P", 0.44, 10), ("Q", 0.34, 5)]) == "Q"

    def test_id_tiebreak(self):
        assert matchmake(0.5, [("z", 0.6, 1), ("a", 0.4, 1)]) == "a"

    def test_empty(self):
        with pytest.raises(NoCandidateError):
            matchmake(0.5, [])

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 1), st.lists(st.tuples(st.floats(0, 1), st.integers(0, 5)), min_size=1, max_size=8))
    def test_minimal_gap(self, task, raw):
        cands = [(f"n{i}", s, w) for i, (s, w) in enumerate(raw)]
        pick = matchmake(task, cands)
        gap = {c[0]: abs(c[1] - task) for c in cands}
        assert pick in gap
        assert all(gap[pick] <= g + 1e-9 for g in gap.values())


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1000), min_size=3, max_size=3),
       st.lists(st.floats(0.1, 1000), min_size=3, max_size=3),
       st.floats(0.01, 100))
def test_affine_consistency(scores, norms, c):
    weights = (0.5, 0.3, 0.2)
    a = node_err_score(NodeRankingProfile.from_columns(scores, weights, norms))
    b = node_err_score(NodeRankingProfile.from_columns([s * c for s in scores], weights, [n * c for n in norms]))
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12)
    assert a == pytest.approx(weighted_sum_oracle(scores, weights, norms), rel=1e-12, abs=1e-15)


def test_ranking_table_append_only(task_profiles, node_profiles):
    t = RankingTable("task")
    for k, p in task_profiles.items():
        t.submit(k, p)
    assert t.verify()
    assert t.to_lines()[0] == "task-1\ttask\t0.39125"
    n = RankingTable("service-node")
    n.submit("s", node_profiles["super-1"])
    n.submit("s", node_profiles["service-1"])
    assert len(n.events) == 2
    assert n.score("s") == pytest.approx(0.695)
    with pytest.raises(ValidationError):
        n.submit("x", task_profiles["task-1"])
