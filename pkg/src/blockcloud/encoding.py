"""Canonical binary encoding and Merkle roots.

Integers are big-endian fixed width, byte and text fields are
length-prefixed, sequences carry an element count.  Every digest in the
library is SHA-256 over this encoding.
"""

from __future__ import annotations

import hashlib
import struct
from decimal import Decimal
from typing import Iterable, Sequence

from .money import to_units

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class Encoder:
    __slots__ = ("_parts",)

    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, x: int) -> "Encoder":
        self._parts.append(struct.pack(">B", x))
        return self

    def u32(self, x: int) -> "Encoder":
        self._parts.append(struct.pack(">I", x))
        return self

    def i64(self, x: int) -> "Encoder":
        self._parts.append(struct.pack(">q", x))
        return self

    def f64(self, x: float) -> "Encoder":
        self._parts.append(struct.pack(">d", x))
        return self

    def amount(self, x: Decimal) -> "Encoder":
        return self.i64(to_units(x))

    def digest(self, d: bytes) -> "Encoder":
        if len(d) != DIGEST_SIZE:
            raise ValueError(f"digest must be {DIGEST_SIZE} bytes, got {len(d)}")
        self._parts.append(d)
        return self

    def blob(self, b: bytes) -> "Encoder":
        self._parts.append(struct.pack(">I", len(b)))
        self._parts.append(b)
        return self

    def text(self, s: str) -> "Encoder":
        return self.blob(s.encode("utf-8"))

    def raw(self, b: bytes) -> "Encoder":
        self._parts.append(b)
        return self

    def seq(self, items: Sequence[bytes]) -> "Encoder":
        self.u32(len(items))
        for it in items:
            self._parts.append(it)
        return self

    def bytes(self) -> bytes:
        return b"".join(self._parts)


def merkle_root(leaves: Iterable[bytes]) -> bytes:
    """Pairwise SHA-256 tree; an odd level repeats its last node.

    The empty tree's root is the all-zero digest.
    """
    level = list(leaves)
    if not level:
        return ZERO_DIGEST
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [sha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]
