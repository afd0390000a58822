"""Adaptive BFT protocol selection from KCI constraints and KPI scores."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import NoViableProtocolError, ValidationError

Direction = Literal["higher", "lower"]

PROTOCOL_FLAVORS = ("PBFT", "Zyzzyva", "Q/U", "HQ", "Quorum", "Chain", "Ring", "RBFT")
KPI_NAMES = ("throughput", "latency", "capacity")
DEFAULT_DIRECTIONS: tuple[Direction, ...] = ("higher", "lower", "higher")

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ProtocolProfile:
    name: str
    kci_row: tuple[int, ...]
    kpi_row: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "kci_row", tuple(int(x) for x in self.kci_row))
        object.__setattr__(self, "kpi_row", tuple(float(x) for x in self.kpi_row))
        if any(x not in (0, 1) for x in self.kci_row):
            raise ValidationError(f"{self.name}: KCI entries must be 0 or 1")
        if any(not np.isfinite(x) or x < 0 for x in self.kpi_row):
            raise ValidationError(f"{self.name}: KPI entries must be finite and >= 0")


@dataclass(frozen=True)
class Preferences:
    """User KCI requirements, KPI weights, and heuristic-mode weights.

    ``heuristic_weights`` of ``None`` means heuristic mode is off, which
    multiplies by a vector of ones.
    """

    kci_prefs: tuple[int, ...]
    kpi_weights: tuple[float, ...]
    heuristic_weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kci_prefs", tuple(int(x) for x in self.kci_prefs))
        object.__setattr__(self, "kpi_weights", tuple(float(x) for x in self.kpi_weights))
        if any(x not in (0, 1) for x in self.kci_prefs):
            raise ValidationError("KCI preferences must be 0 or 1")
        _check_weights("kpi_weights", self.kpi_weights)
        if self.heuristic_weights is not None:
            hw = tuple(float(x) for x in self.heuristic_weights)
            object.__setattr__(self, "heuristic_weights", hw)
            _check_weights("heuristic_weights", hw)
            if len(hw) != len(self.kpi_weights):
                raise ValidationError("heuristic_weights and kpi_weights differ in length")

    @property
    def heuristic_mode(self) -> bool:
        return self.heuristic_weights is not None

    def w_vector(self) -> np.ndarray:
        if self.heuristic_weights is None:
            return np.ones(len(self.kpi_weights))
        return np.asarray(self.heuristic_weights, dtype=float)


def _check_weights(name: str, w: Sequence[float]) -> None:
    if any(x < 0 for x in w):
        raise ValidationError(f"{name} must be nonnegative")
    if abs(sum(w) - 1.0) > _SUM_TOL:
        raise ValidationError(f"{name} must sum to 1, got {sum(w)!r}")


@dataclass(frozen=True)
class Evaluation:
    C: np.ndarray
    P: np.ndarray
    E: np.ndarray
    names: tuple[str, ...] = field(default=())


def _kci_matrix(profiles: Sequence[ProtocolProfile], prefs: Preferences) -> np.ndarray:
    A = np.array([p.kci_row for p in profiles], dtype=int).reshape(len(profiles), -1)
    if A.shape[1] != len(prefs.kci_prefs):
        raise ValidationError(
            f"KCI dimension mismatch: profiles have {A.shape[1]}, preferences {len(prefs.kci_prefs)}"
        )
    return A


def kci_filter(profiles: Sequence[ProtocolProfile], prefs: Preferences) -> np.ndarray:
    """1 for every protocol that has all the KCIs the user asked for.

    This is the floor of ``(A OR NOT U) / a`` summed per row: a row reaches
    ``a`` only when each preferred column is set.  No preferences passes all.
    """
    A = _kci_matrix(profiles, prefs)
    U = np.asarray(prefs.kci_prefs, dtype=int)
    a = int(U.sum())
    if a == 0:
        return np.ones(len(profiles), dtype=int)
    hits = (A[:, U == 1] == 1).sum(axis=1)
    return (hits // a).astype(int)


def normalize_kpis(B: np.ndarray, directions: Sequence[Direction]) -> np.ndarray:
    """Column-wise scaling to (0, 1] with the best protocol at 1.

    Higher-better columns are divided by their max; lower-better columns
    map x to min/x.  A zero max (or zero min for lower-better) zeroes the column.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[1] != len(directions):
        raise ValidationError(f"KPI matrix has {B.shape[-1]} columns, {len(directions)} directions")
    out = np.zeros_like(B)
    for j, d in enumerate(directions):
        col = B[:, j]
        if d == "higher":
            m = col.max()
            if m > 0:
                out[:, j] = col / m
        elif d == "lower":
            m = col.min()
            if m > 0:
                out[:, j] = m / col
        else:
            raise ValidationError(f"unknown KPI direction {d!r}")
    return out


def kpi_score(profiles: Sequence[ProtocolProfile], prefs: Preferences,
              directions: Sequence[Direction] = DEFAULT_DIRECTIONS) -> np.ndarray:
    B = np.array([p.kpi_row for p in profiles], dtype=float).reshape(len(profiles), -1)
    if B.shape[1] != len(prefs.kpi_weights):
        raise ValidationError("KPI dimension mismatch between profiles and weights")
    Bn = normalize_kpis(B, directions)
    return Bn @ (np.asarray(prefs.kpi_weights) * prefs.w_vector())


def evaluate(profiles: Sequence[ProtocolProfile], prefs: Preferences,
             directions: Sequence[Direction] = DEFAULT_DIRECTIONS) -> Evaluation:
    C = kci_filter(profiles, prefs)
    P = kpi_score(profiles, prefs, directions)
    return Evaluation(C, P, C * P, tuple(p.name for p in profiles))


def select(E: Sequence[float]) -> int:
    """Index of the highest score, earliest protocol on ties."""
    E = np.asarray(E, dtype=float)
    if E.size == 0:
        raise NoViableProtocolError("no protocols to choose from")
    if not np.any(E > 0):
        raise NoViableProtocolError("every protocol scored zero")
    return int(np.argmax(E))


def select_protocol(profiles: Sequence[ProtocolProfile], prefs: Preferences,
                    directions: Sequence[Direction] = DEFAULT_DIRECTIONS) -> tuple[int, Evaluation]:
    ev = evaluate(profiles, prefs, directions)
    return select(ev.E), ev
