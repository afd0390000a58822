"""Economic value graph: knowledge valuation and the node credit table."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import NegativeBalanceError, ValidationError
from .money import ZERO, Number, cftx, to_decimal

_PREC = 60


def _unit_interval(name: str, x: Decimal) -> None:
    if not (0 <= x <= 1):
        raise ValidationError(f"{name} must lie in [0, 1], got {x}")


@dataclass(frozen=True)
class KnowledgePiece:
    """One quantified knowledge piece of a node.

    ``cond_prob`` is the probability of this piece given the previous one;
    the caller supplies it for the first piece as well.
    """

    value: Decimal
    cond_prob: Decimal

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", to_decimal(self.value))
        object.__setattr__(self, "cond_prob", to_decimal(self.cond_prob))
        if self.value < 0:
            raise ValidationError(f"knowledge value must be >= 0, got {self.value}")
        _unit_interval("cond_prob", self.cond_prob)


@dataclass(frozen=True)
class TaskKnowledgePiece:
    """Knowledge created (or destroyed) by a task, with its covariance weight."""

    value: Decimal
    cond_prob: Decimal
    cond_cov: Decimal

    def __post_init__(self) -> None:
        for name in ("value", "cond_prob", "cond_cov"):
            object.__setattr__(self, name, to_decimal(getattr(self, name)))
        if self.value < 0:
            raise ValidationError(f"knowledge value must be >= 0, got {self.value}")
        _unit_interval("cond_prob", self.cond_prob)
        _unit_interval("cond_cov", self.cond_cov)


def _weighted_product(terms: Iterable[tuple[Decimal, Decimal]]) -> Fraction:
    # exact, so the result is independent of piece order;
    # empty knowledge carries no value (not the empty-product 1)
    out = None
    for weight, value in terms:
        term = Fraction(weight) * Fraction(value)
        out = term if out is None else out * term
    return Fraction(0) if out is None else out


def _to_decimal(x: Fraction) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = _PREC
        return Decimal(x.numerator) / Decimal(x.denominator)


def node_initial_value(pieces: Sequence[KnowledgePiece]) -> Decimal:
    """Product of probability-weighted piece values; 0 for no pieces."""
    return _to_decimal(_weighted_product((p.cond_prob, p.value) for p in pieces))


def ecosystem_initial_value(node_values: Iterable[Number]) -> Decimal:
    acc = Decimal(0)
    with localcontext() as ctx:
        ctx.prec = _PREC
        for v in node_values:
            v = to_decimal(v)
            if v < 0:
                raise ValidationError(f"node value must be >= 0, got {v}")
            acc += v
    return acc


def task_incremental_value(pieces: Sequence[TaskKnowledgePiece]) -> Decimal:
    """Probability-weighted product minus covariance-weighted product.

    Negative results mean the task destroyed value.
    """
    gain = _weighted_product((p.cond_prob, p.value) for p in pieces)
    overlap = _weighted_product((p.cond_cov, p.value) for p in pieces)
    return _to_decimal(gain - overlap)


@dataclass(frozen=True)
class CreditRow:
    initial_value: Decimal
    increments: tuple[Decimal, ...] = ()

    @property
    def total(self) -> Decimal:
        return self.initial_value + sum(self.increments, ZERO)


@dataclass(frozen=True)
class CreditTable:
    """Per-node wealth: genesis value plus the ordered per-task increments.

    Value semantics: every mutation returns a new table.
    """

    rows: Mapping[str, CreditRow] = field(default_factory=dict)

    @classmethod
    def from_initial(cls, values: Mapping[str, Number]) -> "CreditTable":
        rows = {}
        for node_id, v in values.items():
            v = cftx(v)
            if v < 0:
                raise NegativeBalanceError(f"{node_id}: initial value {v} < 0")
            rows[node_id] = CreditRow(v)
        return cls(rows)

    def add_node(self, node_id: str, initial_value: Number = 0) -> "CreditTable":
        if node_id in self.rows:
            raise ValidationError(f"node {node_id!r} already in credit table")
        v = cftx(initial_value)
        if v < 0:
            raise NegativeBalanceError(f"{node_id}: initial value {v} < 0")
        return replace(self, rows={**self.rows, node_id: CreditRow(v)})

    def apply_increment(self, node_id: str, delta: Number) -> "CreditTable":
        if node_id not in self.rows:
            raise KeyError(node_id)
        row = self.rows[node_id]
        delta = cftx(delta)
        if row.total + delta < 0:
            raise NegativeBalanceError(
                f"{node_id}: total {row.total} + {delta} would go negative"
            )
        new_row = CreditRow(row.initial_value, row.increments + (delta,))
        return replace(self, rows={**self.rows, node_id: new_row})

    def total(self, node_id: str) -> Decimal:
        return self.rows[node_id].total

    @property
    def initial_total(self) -> Decimal:  # V0
        return sum((r.initial_value for r in self.rows.values()), ZERO)

    @property
    def increment_total(self) -> Decimal:  # T1
        return sum((sum(r.increments, ZERO) for r in self.rows.values()), ZERO)

    @property
    def ecosystem_total(self) -> Decimal:  # V1
        return sum((r.total for r in self.rows.values()), ZERO)

    def __iter__(self) -> Iterator[str]:
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def to_lines(self) -> list[str]:
        """One tab-separated record per node: id, initial, increments, total."""
        out = []
        for node_id in sorted(self.rows):
            row = self.rows[node_id]
            incs = ",".join(str(d) for d in row.increments)
            out.append(f"{node_id}\t{row.initial_value}\t{incs}\t{row.total}")
        return out

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "CreditTable":
        rows = {}
        for line in lines:
            line = line.rstrip("\n")
            if not line:
                continue
            node_id, initial, incs, tot = line.split("\t")
            increments = tuple(Decimal(x) for x in incs.split(",")) if incs else ()
            row = CreditRow(Decimal(initial), increments)
            if row.total != Decimal(tot):
                raise ValidationError(f"{node_id}: stored total {tot} != {row.total}")
            rows[node_id] = row
        return cls(rows)
