"""DPoEV economic policy: issuance, VAT netting, rewards, tariffs and true-up."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Any, Mapping, Sequence

from .err import DEFAULT_RELEVANCY_RESOLUTION, relevancy_gap
from .errors import (
    DegenerateSplitError,
    InsufficientNodesError,
    NegativeBalanceError,
    ValidationError,
)
from .money import ZERO, Number, cftx, cftx_floor, to_decimal

DEFAULT_SUPER_SHARE = Decimal("0.2")
DEFAULT_DOMINANCE_THRESHOLD = Decimal("0.5")
DEFAULT_TARIFF_RATE = Decimal("0.1")


@dataclass(frozen=True)
class TokenSupply:
    genesis: Decimal = ZERO
    issued: Decimal = ZERO
    burned: Decimal = ZERO

    def __post_init__(self) -> None:
        for name in ("genesis", "issued", "burned"):
            v = cftx(getattr(self, name))
            if v < 0:
                raise NegativeBalanceError(f"supply.{name} must be >= 0, got {v}")
            object.__setattr__(self, name, v)
        if self.circulating < 0:
            raise NegativeBalanceError(f"circulating supply would be {self.circulating}")

    @property
    def circulating(self) -> Decimal:
        return self.genesis + self.issued - self.burned

    def as_dict(self) -> dict[str, str]:
        return {
            "genesis": str(self.genesis),
            "issued": str(self.issued),
            "burned": str(self.burned),
            "circulating": str(self.circulating),
        }


@dataclass(frozen=True)
class VatLedger:
    """Signed balance: positive is a liability (inflation), negative a credit."""

    balance: Decimal = ZERO

    def __post_init__(self) -> None:
        object.__setattr__(self, "balance", cftx(self.balance))

    def post(self, amount: Number) -> "VatLedger":
        return VatLedger(self.balance + cftx(amount))


def genesis_issue(initial_value: Number) -> TokenSupply:
    v = cftx(initial_value)
    if v < 0:
        raise ValidationError(f"genesis value must be >= 0, got {v}")
    return TokenSupply(genesis=v)


def task_issue(supply: TokenSupply, increment: Number,
               vat: VatLedger = VatLedger()) -> tuple[TokenSupply, VatLedger, Decimal]:
    """Issue fresh tokens for a task's value increment.

    Returns ``(supply, vat, issued_now)``.  A positive increment is netted
    against the VAT balance: a liability shrinks it, a credit grows it.  If a
    liability exceeds the increment, nothing is issued and the rest carries.
    A negative increment means value was destroyed; it is posted to VAT as a
    liability against the next round.
    """
    inc = cftx(increment)
    if inc > 0:
        net = inc - vat.balance
        if net < 0:
            return supply, VatLedger(-net), ZERO
        new = replace(supply, issued=supply.issued + net)
        return new, VatLedger(), net
    if inc < 0:
        return supply, vat.post(-inc), ZERO
    return supply, vat, ZERO


def true_up(supply: TokenSupply, unawarded: Number) -> TokenSupply:
    amt = cftx(unawarded)
    if amt < 0:
        raise ValidationError(f"burn amount must be >= 0, got {amt}")
    if amt > supply.circulating:
        raise NegativeBalanceError(f"cannot burn {amt}, circulating is {supply.circulating}")
    return replace(supply, burned=supply.burned + amt)


@dataclass(frozen=True)
class RewardSplit:
    task_wealth: Decimal
    super_share: Decimal = DEFAULT_SUPER_SHARE
    supers: Mapping[str, float] = field(default_factory=dict)
    resources: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_wealth", cftx(self.task_wealth))
        object.__setattr__(self, "super_share", to_decimal(self.super_share))
        if self.task_wealth < 0:
            raise ValidationError("task wealth must be >= 0")
        if not 0 <= self.super_share <= 1:
            raise ValidationError(f"super_share must lie in [0, 1], got {self.super_share}")
        for pool in (self.supers, self.resources):
            for node_id, w in pool.items():
                if w < 0:
                    raise ValidationError(f"contribution of {node_id} must be >= 0")


def _split_pool(amount: Decimal, weights: Mapping[str, Any]) -> dict[str, Decimal]:
    if not weights:
        return {}
    wsum = sum(to_decimal(w) for w in weights.values())
    if wsum == 0:
        if amount == 0:
            return {k: ZERO for k in weights}
        raise DegenerateSplitError("every contribution weight in the pool is zero")
    return {k: cftx_floor(amount * to_decimal(w) / wsum) for k, w in weights.items()}


def distribute_rewards(split: RewardSplit) -> dict[str, Decimal]:
    """Split task wealth between the super-node and resource-node pools.

    Each pool is divided proportionally to normalized contribution weights,
    rounding down; ``split.task_wealth - sum(result.values())`` is dust for
    the true-up burn.  A pool with no contributors is left unawarded.
    """
    super_pool = cftx_floor(split.task_wealth * split.super_share)
    resource_pool = split.task_wealth - super_pool
    awards: dict[str, Decimal] = {}
    for pool_amount, weights in ((super_pool, split.supers), (resource_pool, split.resources)):
        for node_id, amt in _split_pool(pool_amount, weights).items():
            awards[node_id] = awards.get(node_id, ZERO) + amt
    return awards


@dataclass(frozen=True)
class TariffOutcome:
    awards: dict[str, Decimal]
    levied: dict[str, Decimal]
    held: Decimal  # levy with no eligible recipient, plus rounding dust


def apply_fairness_tariff(awards: Mapping[str, Number],
                          dominance_threshold: Number = DEFAULT_DOMINANCE_THRESHOLD,
                          tariff_rate: Number = DEFAULT_TARIFF_RATE,
                          cumulative: Mapping[str, Number] | None = None) -> TariffOutcome:
    """Levy dominating nodes and pass the levy to the other participants.

    A node dominates when its cumulative award share, counting this round,
    exceeds ``dominance_threshold``.  It pays ``tariff_rate`` of this round's
    award; the levy is shared equally by the non-dominating participants of
    the round.  With nobody eligible the levy is held for the true-up burn.
    """
    thr = to_decimal(dominance_threshold)
    rate = to_decimal(tariff_rate)
    if not (0 <= thr <= 1 and 0 <= rate <= 1):
        raise ValidationError("threshold and tariff rate must lie in [0, 1]")
    this_round = {k: cftx(v) for k, v in awards.items()}
    cum = {k: cftx(v) for k, v in (cumulative or {}).items()}
    for k, v in this_round.items():
        cum[k] = cum.get(k, ZERO) + v
    grand = sum(cum.values(), ZERO)
    if grand == 0:
        return TariffOutcome(dict(this_round), {}, ZERO)

    dominating = sorted(k for k in this_round if cum[k] / grand > thr)
    if not dominating:
        return TariffOutcome(dict(this_round), {}, ZERO)

    out = dict(this_round)
    levied = {}
    for k in dominating:
        levy = cftx_floor(this_round[k] * rate)
        levied[k] = levy
        out[k] -= levy
    pot = sum(levied.values(), ZERO)
    eligible = sorted(k for k in this_round if k not in levied)
    if not eligible:
        return TariffOutcome(out, levied, pot)
    share = cftx_floor(pot / len(eligible))
    for k in eligible:
        out[k] += share
    return TariffOutcome(out, levied, pot - share * len(eligible))


def select_service_nodes(task_score: float, candidates: Sequence[tuple[str, float, Number]],
                         k: int,
                         resolution: float = DEFAULT_RELEVANCY_RESOLUTION) -> tuple[list[str], str]:
    """Rule of relevancy, then rule of wealth.

    Candidates ``(node_id, score, wealth)`` are ordered by relevancy gap,
    then wealth, then id; the first ``k`` are returned together with the
    designated handler, the poorest member of the chosen set.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if len(candidates) < k:
        raise InsufficientNodesError(f"need {k} nodes, only {len(candidates)} candidates")
    ranked = sorted(
        candidates,
        key=lambda c: (relevancy_gap(c[1], task_score, resolution), to_decimal(c[2]), c[0]),
    )
    chosen = ranked[:k]
    handler = min(chosen, key=lambda c: (to_decimal(c[2]), c[0]))[0]
    return [c[0] for c in chosen], handler


@dataclass
class PolicyEngine:
    """Single-writer DPoEV state with an audit trail.

    Every issuance, award, tariff and burn appends one audit record.
    Operations validate before mutating, so a failed call leaves state intact.
    """

    supply: TokenSupply
    vat: VatLedger = field(default_factory=VatLedger)
    super_share: Decimal = DEFAULT_SUPER_SHARE
    dominance_threshold: Decimal = DEFAULT_DOMINANCE_THRESHOLD
    tariff_rate: Decimal = DEFAULT_TARIFF_RATE
    cumulative_awards: dict[str, Decimal] = field(default_factory=dict)
    pending_burn: Decimal = ZERO
    audit: list[dict] = field(default_factory=list)

    def _emit(self, kind: str, **fields) -> None:
        rec = {"type": kind}
        for k, v in fields.items():
            if isinstance(v, Decimal):
                v = str(v)
            elif isinstance(v, dict):
                v = {kk: str(vv) if isinstance(vv, Decimal) else vv for kk, vv in sorted(v.items())}
            rec[k] = v
        self.audit.append(rec)

    def issue_for_task(self, task_id: str, increment: Number) -> Decimal:
        supply, vat, issued = task_issue(self.supply, increment, self.vat)
        self.supply, self.vat = supply, vat
        self._emit("issue", task=task_id, increment=cftx(increment), issued=issued,
                   vat=vat.balance)
        return issued

    def post_vat(self, amount: Number, reason: str = "") -> None:
        self.vat = self.vat.post(amount)
        self._emit("vat", amount=cftx(amount), balance=self.vat.balance, reason=reason)

    def reward_task(self, task_id: str, task_wealth: Number, supers: Mapping[str, float],
                    resources: Mapping[str, float]) -> tuple[dict[str, Decimal], Decimal]:
        """Distribute, apply the tariff, and queue dust for the true-up.

        Returns ``(final_awards, unawarded)`` where the two sum to task wealth.
        """
        split = RewardSplit(cftx(task_wealth), self.super_share, supers, resources)
        raw = distribute_rewards(split)
        tariff = apply_fairness_tariff(raw, self.dominance_threshold, self.tariff_rate,
                                       self.cumulative_awards)
        final = tariff.awards
        unawarded = split.task_wealth - sum(final.values(), ZERO)
        self._emit("award", task=task_id, task_wealth=split.task_wealth, awards=final,
                   unawarded=unawarded)
        if tariff.levied:
            self._emit("tariff", task=task_id, levied=tariff.levied, held=tariff.held)
        for k, v in final.items():
            self.cumulative_awards[k] = self.cumulative_awards.get(k, ZERO) + v
        self.pending_burn += unawarded
        return final, unawarded

    def true_up(self) -> Decimal:
        amt = self.pending_burn
        self.supply = true_up(self.supply, amt)
        self.pending_burn = ZERO
        self._emit("burn", amount=amt)
        return amt
