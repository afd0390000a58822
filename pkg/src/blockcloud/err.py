"""Economic relevancy ranking for tasks and service nodes, plus matchmaking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

from .errors import NoCandidateError, ValidationError

TASK_FACTORS = (
    "time_criticalness",
    "computing_intensity",
    "transaction_frequency",
    "transaction_scale",
    "required_propagation",
    "data_requirement",
)
NODE_PROPERTIES = ("consistency", "computability", "deterministicness")

WEIGHT_SUM_TOL = 1e-9
# Gaps closer than this count as equally relevant.
DEFAULT_RELEVANCY_RESOLUTION = 1e-9


@dataclass(frozen=True)
class FactorScore:
    score: float
    weight: float
    norm: float

    def __post_init__(self) -> None:
        if self.score < 0:
            raise ValidationError(f"factor score must be >= 0, got {self.score}")
        if not 0 <= self.weight <= 1:
            raise ValidationError(f"factor weight must lie in [0, 1], got {self.weight}")
        if not self.norm > 0:
            raise ValidationError(f"normalization coefficient must be > 0, got {self.norm}")

    @property
    def contribution(self) -> float:
        return self.weight * self.score / self.norm


def _check_profile(factors: Sequence[FactorScore], names: Sequence[str]) -> None:
    if len(factors) != len(names):
        raise ValidationError(f"expected {len(names)} factors ({', '.join(names)}), got {len(factors)}")
    wsum = math.fsum(f.weight for f in factors)
    if abs(wsum - 1.0) > WEIGHT_SUM_TOL:
        raise ValidationError(f"factor weights must sum to 1, got {wsum!r}")


@dataclass(frozen=True)
class TaskRankingProfile:
    factors: tuple[FactorScore, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "factors", tuple(self.factors))
        _check_profile(self.factors, TASK_FACTORS)

    @classmethod
    def from_columns(cls, scores, weights, norms) -> "TaskRankingProfile":
        return cls(tuple(FactorScore(s, w, n) for s, w, n in zip(scores, weights, norms, strict=True)))


@dataclass(frozen=True)
class NodeRankingProfile:
    factors: tuple[FactorScore, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "factors", tuple(self.factors))
        _check_profile(self.factors, NODE_PROPERTIES)

    @classmethod
    def from_columns(cls, scores, weights, norms) -> "NodeRankingProfile":
        return cls(tuple(FactorScore(s, w, n) for s, w, n in zip(scores, weights, norms, strict=True)))


def _err(factors: Iterable[FactorScore]) -> float:
    return math.fsum(f.contribution for f in factors)


def task_err_score(profile: TaskRankingProfile) -> float:
    return _err(profile.factors)


def node_err_score(profile: NodeRankingProfile) -> float:
    return _err(profile.factors)


def relevancy_gap(node_score: float, task_score: float,
                  resolution: float = DEFAULT_RELEVANCY_RESOLUTION) -> int:
    """Absolute score gap bucketed to ``resolution``; equal buckets are equally relevant."""
    return round(abs(node_score - task_score) / resolution)


def rank_candidates(task_score: float, candidates: Sequence[tuple[str, float, float]],
                    resolution: float = DEFAULT_RELEVANCY_RESOLUTION) -> list[str]:
    """Candidate ids, most relevant first; ties go to the poorer node, then the smaller id."""
    ranked = sorted(
        candidates,
        key=lambda c: (relevancy_gap(c[1], task_score, resolution), c[2], c[0]),
    )
    return [c[0] for c in ranked]


def matchmake(task_score: float, candidates: Sequence[tuple[str, float, float]],
              resolution: float = DEFAULT_RELEVANCY_RESOLUTION) -> str:
    """Pick the node whose ranking score is closest to the task's.

    ``candidates`` holds ``(node_id, score, wealth)``.
    """
    if not candidates:
        raise NoCandidateError("matchmake needs at least one candidate")
    return rank_candidates(task_score, candidates, resolution)[0]


Kind = Literal["task", "service-node"]


@dataclass(frozen=True)
class RankingEvent:
    seq: int
    entity_id: str
    kind: Kind
    profile: TaskRankingProfile | NodeRankingProfile
    score: float


@dataclass
class RankingTable:
    """Append-only ranking table.

    Scores change only through new profile submissions, which are kept as
    events; the current score of an id is the one from its latest event.
    """

    kind: Kind
    events: list[RankingEvent] = field(default_factory=list)
    _current: dict[str, RankingEvent] = field(default_factory=dict, repr=False)

    def submit(self, entity_id: str, profile) -> float:
        if self.kind == "task":
            if not isinstance(profile, TaskRankingProfile):
                raise ValidationError("task table accepts TaskRankingProfile only")
            score = task_err_score(profile)
        else:
            if not isinstance(profile, NodeRankingProfile):
                raise ValidationError("service-node table accepts NodeRankingProfile only")
            score = node_err_score(profile)
        ev = RankingEvent(len(self.events), entity_id, self.kind, profile, score)
        self.events.append(ev)
        self._current[entity_id] = ev
        return score

    def score(self, entity_id: str) -> float:
        return self._current[entity_id].score

    def scores(self) -> dict[str, float]:
        return {k: ev.score for k, ev in self._current.items()}

    def verify(self) -> bool:
        """Recompute every stored score from its profile."""
        for ev in self.events:
            fn = task_err_score if ev.kind == "task" else node_err_score
            if fn(ev.profile) != ev.score:
                return False
        return True

    def to_lines(self) -> list[str]:
        return [f"{k}\t{self.kind}\t{self._current[k].score!r}" for k in sorted(self._current)]
