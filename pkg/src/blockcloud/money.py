"""Fixed-point CFTX amounts.

Amounts are :class:`decimal.Decimal` values quantized to six fractional
digits.  Sums of quantized values are exact, which keeps the supply and
credit-table conservation checks free of floating drift.
"""

from __future__ import annotations

from decimal import ROUND_DOWN, ROUND_HALF_EVEN, Decimal, localcontext
from typing import Iterable, Union

Number = Union[Decimal, int, float, str]

QUANTUM = Decimal("0.000001")
ZERO = Decimal("0.000000")
UNITS_PER_CFTX = 10**6


def to_decimal(x: Number) -> Decimal:
    """Exact conversion; floats go through ``repr`` so 0.1 stays 0.1."""
    if isinstance(x, Decimal):
        return x
    if isinstance(x, float):
        return Decimal(repr(x))
    return Decimal(x)


def cftx(x: Number) -> Decimal:
    """Quantize to the CFTX grid with banker's rounding."""
    with localcontext() as ctx:
        ctx.prec = 50
        return to_decimal(x).quantize(QUANTUM, rounding=ROUND_HALF_EVEN)


def cftx_floor(x: Number) -> Decimal:
    """Quantize toward zero; used for proportional splits so dust is never negative."""
    with localcontext() as ctx:
        ctx.prec = 50
        return to_decimal(x).quantize(QUANTUM, rounding=ROUND_DOWN)


def to_units(x: Number) -> int:
    """Integer micro-CFTX, the wire representation."""
    return int(cftx(x) * UNITS_PER_CFTX)


def from_units(units: int) -> Decimal:
    return cftx(Decimal(units) / UNITS_PER_CFTX)


def total(values: Iterable[Number]) -> Decimal:
    acc = ZERO
    for v in values:
        acc += cftx(v)
    return acc
