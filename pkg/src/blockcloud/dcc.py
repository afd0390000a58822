"""KPI prediction: a pluggable base predictor corrected by a DCC(1,1) residual model.

Each KPI gets a univariate GARCH(1,1) variance, and the standardized
residuals drive a one-lag dynamic correlation recursion.  Only the previous
task's residual is retained.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalDegeneracyError, ValidationError

DEFAULT_A = 0.05
DEFAULT_B = 0.90
DEFAULT_KAPPA = 0.2
DEFAULT_LAMBDA = 0.7
DEFAULT_H0_SQ = 0.1
DEFAULT_ALPHA = 0.3


def residual(predicted: Sequence[float], observed: Sequence[float]) -> np.ndarray:
    p = np.asarray(predicted, dtype=float)
    o = np.asarray(observed, dtype=float)
    if p.shape != o.shape:
        raise ValidationError(f"length mismatch: predicted {p.shape}, observed {o.shape}")
    e = p - o
    if not np.all(np.isfinite(e)):
        raise ValidationError("residual has non-finite entries")
    return e


@dataclass(frozen=True)
class DccState:
    """Everything the recursion carries from one task to the next.

    ``h_sq`` holds the diagonal of H squared; ``kappa``, ``lam`` and
    ``h0_sq`` are the diagonals of K, Lambda and H0 squared.
    """

    h_sq: np.ndarray
    O: np.ndarray
    O_bar: np.ndarray
    kappa: np.ndarray
    lam: np.ndarray
    h0_sq: np.ndarray
    a: float = DEFAULT_A
    b: float = DEFAULT_B

    def __post_init__(self) -> None:
        for name in ("h_sq", "O", "O_bar", "kappa", "lam", "h0_sq"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))
        m = self.m
        if self.O.shape != (m, m) or self.O_bar.shape != (m, m):
            raise ValidationError("O and O_bar must be m x m")
        for name in ("kappa", "lam", "h0_sq"):
            if getattr(self, name).shape != (m,):
                raise ValidationError(f"{name} must have length {m}")
        if self.a < 0 or self.b < 0 or self.a + self.b >= 1:
            raise ValidationError(f"need a, b >= 0 and a + b < 1, got a={self.a}, b={self.b}")
        if np.any(self.h_sq <= 0) or np.any(self.h0_sq <= 0):
            raise ValidationError("variances must be positive")
        if np.any(self.kappa < 0) or np.any(self.lam < 0):
            raise ValidationError("kappa and lambda must be nonnegative")
        if not np.allclose(self.O_bar, self.O_bar.T, atol=1e-12):
            raise ValidationError("O_bar must be symmetric")
        if not np.allclose(np.diag(self.O_bar), 1.0, atol=1e-9):
            raise ValidationError("O_bar must have unit diagonal")

    @property
    def m(self) -> int:
        return int(self.h_sq.shape[0])

    @classmethod
    def initial(cls, m: int, *, a: float = DEFAULT_A, b: float = DEFAULT_B,
                kappa: float = DEFAULT_KAPPA, lam: float = DEFAULT_LAMBDA,
                h0_sq: float = DEFAULT_H0_SQ, O_bar: np.ndarray | None = None) -> "DccState":
        O_bar = np.eye(m) if O_bar is None else np.asarray(O_bar, dtype=float)
        return cls(
            h_sq=np.full(m, h0_sq),
            O=O_bar.copy(),
            O_bar=O_bar,
            kappa=np.full(m, kappa),
            lam=np.full(m, lam),
            h0_sq=np.full(m, h0_sq),
            a=a,
            b=b,
        )

    def to_dict(self) -> dict:
        return {
            "h_sq": self.h_sq.tolist(),
            "O": self.O.tolist(),
            "O_bar": self.O_bar.tolist(),
            "kappa": self.kappa.tolist(),
            "lam": self.lam.tolist(),
            "h0_sq": self.h0_sq.tolist(),
            "a": self.a,
            "b": self.b,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DccState":
        return cls(**d)


@dataclass(frozen=True)
class DccOutput:
    P: np.ndarray
    Omega: np.ndarray
    H: np.ndarray


def dcc_step(state: DccState, prev_residual: Sequence[float]) -> tuple[DccState, DccOutput]:
    e = np.asarray(prev_residual, dtype=float)
    if e.shape != (state.m,):
        raise ValidationError(f"residual must have length {state.m}")

    # standardize with the previous step's volatility
    xi = e / np.sqrt(state.h_sq)
    h_sq = state.h0_sq + state.kappa * e**2 + state.lam * state.h_sq
    if np.any(~np.isfinite(h_sq)) or np.any(h_sq <= 0):
        raise NumericalDegeneracyError(f"non-positive variance {h_sq}")

    O = (1 - state.a - state.b) * state.O_bar + state.a * np.outer(xi, xi) + state.b * state.O
    O = 0.5 * (O + O.T)
    d = np.diag(O)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise NumericalDegeneracyError(f"non-positive correlation diagonal {d}")
    inv = 1.0 / np.sqrt(d)
    P = O * np.outer(inv, inv)
    np.fill_diagonal(P, 1.0)
    h = np.sqrt(h_sq)
    Omega = P * np.outer(h, h)

    new_state = replace(state, h_sq=h_sq, O=O)
    return new_state, DccOutput(P=P, Omega=Omega, H=np.diag(h))


def predict(base_prediction: Sequence[float], output: DccOutput) -> np.ndarray:
    """Base prediction plus the predicted variance of each KPI."""
    base = np.asarray(base_prediction, dtype=float)
    diag = np.diag(output.Omega)
    if base.shape != diag.shape:
        raise ValidationError("prediction and covariance dimensions differ")
    return base + diag


def ema_predict(history: Sequence[Sequence[float]], alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Exponential moving average over observed KPI vectors, oldest first."""
    if len(history) == 0:
        raise ValidationError("base_predict needs at least one observation")
    if not 0 < alpha <= 1:
        raise ValidationError(f"alpha must lie in (0, 1], got {alpha}")
    it = iter(history)
    s = np.asarray(next(it), dtype=float).copy()
    for x in it:
        s = (1 - alpha) * s + alpha * np.asarray(x, dtype=float)
    return s


base_predict = ema_predict

BasePredictor = Callable[[Sequence[Sequence[float]]], np.ndarray]


@dataclass
class KpiPredictor:
    """One KPI stream: base predictor plus DCC correction.

    ``forecast`` gives the corrected KPI vector for the next task;
    ``observe`` feeds the realized KPIs back.
    """

    state: DccState
    base: BasePredictor = ema_predict
    history: list[np.ndarray] = field(default_factory=list)
    last_output: DccOutput | None = None
    _pending: np.ndarray | None = None

    def forecast(self) -> np.ndarray:
        if not self.history:
            raise ValidationError("no observations yet")
        b_hat = self.base(self.history)
        self._pending = b_hat
        if self.last_output is None:
            return b_hat
        return predict(b_hat, self.last_output)

    def observe(self, observed: Sequence[float]) -> DccOutput | None:
        obs = np.asarray(observed, dtype=float)
        out = None
        if self._pending is not None:
            e = residual(self._pending, obs)
            self.state, out = dcc_step(self.state, e)
            self.last_output = out
            self._pending = None
        self.history.append(obs)
        return out
