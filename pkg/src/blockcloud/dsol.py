"""Dual-token DSOL bookkeeping, asset anchoring, and permission-based cross-chain exchange."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from typing import Callable, Mapping

from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .chain import DEFAULT_SIGNER, Signer
from .encoding import Encoder, sha256
from .errors import (
    BlacklistedError,
    ExchangeError,
    IntegrityError,
    NegativeBalanceError,
    ValidationError,
)
from .money import QUANTUM, ZERO, Number, cftx, to_decimal, to_units, from_units

DEFAULT_TOKEN_COUNT = 1000
DEFAULT_EXCHANGE_EXPIRY_US = 30_000_000
DEFAULT_MESSAGE_LATENCY_US = 100_000


# -- DSOL book and market value ------------------------------------------------


@dataclass(frozen=True)
class DsolToken:
    serial: str
    owner: str
    book_value: Decimal

    @property
    def indivisible(self) -> bool:
        return True


@dataclass(frozen=True)
class Dsol:
    id: str
    book_value: Decimal
    tokens: tuple[DsolToken, ...]
    market_multiplier: Decimal = Decimal(1)
    weights: tuple[Fraction, ...] | None = None

    def token(self, serial: str) -> DsolToken:
        for t in self.tokens:
            if t.serial == serial:
                return t
        raise KeyError(serial)

    def check(self) -> None:
        if sum((t.book_value for t in self.tokens), ZERO) != self.book_value:
            raise IntegrityError(f"{self.id}: token book values do not sum to {self.book_value}")


def _split_units(total_units: int, weights: list[Fraction]) -> list[int]:
    # floor each share, then hand the leftover micro-units out in serial order
    shares = [int(total_units * w) for w in weights]
    for i in range(total_units - sum(shares)):
        shares[i % len(shares)] += 1
    return shares


def _revalue(dsol: Dsol, book_value: Decimal) -> Dsol:
    n = len(dsol.tokens)
    weights = list(dsol.weights) if dsol.weights else [Fraction(1, n)] * n
    units = _split_units(to_units(book_value), weights)
    tokens = tuple(replace(t, book_value=from_units(u)) for t, u in zip(dsol.tokens, units))
    return replace(dsol, book_value=book_value, tokens=tokens)


def create_dsol(dsol_id: str, book_value: Number, owner: str,
                n_tokens: int = DEFAULT_TOKEN_COUNT, market_multiplier: Number = 1) -> Dsol:
    """A DSOL with ``n_tokens`` serials ``<id>000`` .. ``<id>999`` (width follows the count)."""
    if n_tokens < 1:
        raise ValidationError("a DSOL needs at least one token")
    bv = cftx(book_value)
    if bv < 0:
        raise NegativeBalanceError("book value must be >= 0")
    width = len(str(n_tokens - 1))
    tokens = tuple(DsolToken(f"{dsol_id}{i:0{width}d}", owner, ZERO) for i in range(n_tokens))
    d = Dsol(dsol_id, bv, tokens, _multiplier(market_multiplier))
    return _revalue(d, bv)


def _multiplier(x: Number) -> Decimal:
    m = to_decimal(x)
    if m <= 0:
        raise ValidationError(f"market multiplier must be > 0, got {m}")
    return m


def record_task_outcome(dsol: Dsol, increment: Number) -> Dsol:
    new_value = dsol.book_value + cftx(increment)
    if new_value < 0:
        raise NegativeBalanceError(f"{dsol.id}: book value would become {new_value}")
    return _revalue(dsol, new_value)


def set_token_values(dsol: Dsol, values: Mapping[str, Number]) -> Dsol:
    """Give tokens individual book values; they must add up to the DSOL's book value.

    The resulting proportions are kept for later revaluations.
    """
    if set(values) != {t.serial for t in dsol.tokens}:
        raise ValidationError("values must cover every token serial exactly once")
    vals = {k: cftx(v) for k, v in values.items()}
    if any(v < 0 for v in vals.values()):
        raise ValidationError("token values must be >= 0")
    if sum(vals.values(), ZERO) != dsol.book_value:
        raise ValidationError(f"token values sum to {sum(vals.values(), ZERO)}, not {dsol.book_value}")
    total_units = to_units(dsol.book_value)
    weights = tuple(Fraction(to_units(vals[t.serial]), total_units) if total_units else Fraction(1, len(vals))
                    for t in dsol.tokens)
    tokens = tuple(replace(t, book_value=vals[t.serial]) for t in dsol.tokens)
    return replace(dsol, tokens=tokens, weights=weights)


def market_value(dsol: Dsol) -> Decimal:
    return cftx(dsol.book_value * dsol.market_multiplier)


def with_market_multiplier(dsol: Dsol, multiplier: Number) -> Dsol:
    return replace(dsol, market_multiplier=_multiplier(multiplier))


def transfer_token(dsol: Dsol, serial: str, new_owner: str) -> Dsol:
    """Move one whole token; tokens are never split."""
    tok = dsol.token(serial)
    tokens = tuple(replace(t, owner=new_owner) if t is tok else t for t in dsol.tokens)
    return replace(dsol, tokens=tokens)


def auction_token(dsol: Dsol, serial: str, bids: Mapping[str, Number]) -> tuple[Dsol, str, Decimal]:
    """Sealed-bid sale to the highest bidder (smaller bidder id on ties)."""
    if not bids:
        raise ValidationError("auction needs at least one bid")
    winner, price = min(((b, cftx(p)) for b, p in bids.items()), key=lambda bp: (-bp[1], bp[0]))
    return transfer_token(dsol, serial, winner), winner, price


# -- asset anchoring -------------------------------------------------------------


@dataclass(frozen=True)
class AnchorPosition:
    asset_value: Decimal
    minted: Decimal = ZERO

    def __post_init__(self) -> None:
        object.__setattr__(self, "asset_value", cftx(self.asset_value))
        object.__setattr__(self, "minted", cftx(self.minted))
        if self.asset_value < 0 or self.minted < 0:
            raise ValidationError("anchor amounts must be >= 0")
        if self.minted > self.asset_value:
            raise ValidationError(f"minted {self.minted} exceeds asset value {self.asset_value}")


def anchor_mint(pos: AnchorPosition, amount: Number) -> AnchorPosition:
    amt = cftx(amount)
    if amt < 0:
        raise ValidationError("mint amount must be >= 0")
    if pos.minted + amt > pos.asset_value:
        raise ValidationError(f"minting {amt} would exceed asset value {pos.asset_value}")
    return replace(pos, minted=pos.minted + amt)


def anchor_redeem(pos: AnchorPosition, amount: Number) -> AnchorPosition:
    amt = cftx(amount)
    if not 0 <= amt <= pos.minted:
        raise ValidationError(f"cannot redeem {amt} of {pos.minted} minted")
    return AnchorPosition(pos.asset_value - amt, pos.minted - amt)


def anchor_adjust(pos: AnchorPosition, new_asset_value: Number) -> tuple[AnchorPosition, Decimal]:
    """Revalue the pledged asset; minted tokens above the new value are burned.

    Returns ``(position, burned)``.
    """
    v = cftx(new_asset_value)
    if v < 0:
        raise ValidationError("asset value must be >= 0")
    burned = max(ZERO, pos.minted - v)
    return AnchorPosition(v, pos.minted - burned), burned


# -- cross-chain exchange ------------------------------------------------------------


class TokenStatus(str, Enum):
    NORMAL = "Normal"
    EXCHANGE = "Exchange"
    DISABLED = "Disabled"


class TokenKind(str, Enum):
    COLLECTION = "collection"
    NON_COLLECTION = "non-collection"


@dataclass(frozen=True)
class PathRecord:
    time: int
    from_chain: str
    to_chain: str
    prior_owner: str
    new_owner: str
    private_ref: str = ""  # empty unless private data was authorized


@dataclass
class XToken:
    id: str
    base_id: str
    xtype: TokenKind
    owner: str
    chain: str
    status: TokenStatus = TokenStatus.NORMAL
    public_data: bytes = b""
    private_data: bytes | None = None
    value: Decimal = ZERO
    owner_history: dict[str, str] = field(default_factory=dict)
    path: list[PathRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.value = cftx(self.value)
        self.owner_history.setdefault(self.chain, self.owner)


@dataclass(frozen=True)
class ExchangeMessage:
    """Wire message between chains; the header layout is fixed."""

    msg_type: str
    sender_chain: str
    timestamp: int
    expiry: int
    price: Decimal
    payload_digest: bytes
    payload: bytes = b""
    signature: bytes = b""

    def header_bytes(self) -> bytes:
        return (
            Encoder()
            .text(self.msg_type).text(self.sender_chain).i64(self.timestamp).i64(self.expiry)
            .amount(self.price).digest(self.payload_digest)
            .bytes()
        )

    def encode(self) -> bytes:
        return Encoder().raw(self.header_bytes()).blob(self.payload).blob(self.signature).bytes()


def _encode_token_info(tok: XToken, private_ref: str) -> bytes:
    return (
        Encoder()
        .text(tok.id).text(tok.base_id).text(tok.xtype.value).text(tok.owner).text(tok.chain)
        .blob(tok.public_data).amount(tok.value).text(private_ref)
        .bytes()
    )


@dataclass(frozen=True)
class SealedPrivateData:
    nonce: bytes
    ciphertext: bytes
    digest: bytes  # of the plaintext, for the byte-exact restore check


@dataclass
class ChainLedger:
    name: str
    tokens: dict[str, XToken] = field(default_factory=dict)
    blacklist: set[str] = field(default_factory=set)
    barred_pairs: set[frozenset] = field(default_factory=set)
    vault: dict[str, SealedPrivateData] = field(default_factory=dict)
    registered: set[str] = field(default_factory=set)

    def by_base(self, base_id: str) -> list[XToken]:
        return [t for t in self.tokens.values() if t.base_id == base_id]


class ExchangeCancelled(ExchangeError):
    pass


@dataclass
class CrossChainNetwork:
    """A set of simulated chains sharing one clock and exchange counter."""

    seed: int = 0
    latency_us: int = DEFAULT_MESSAGE_LATENCY_US
    signer: Signer = DEFAULT_SIGNER
    chains: dict[str, ChainLedger] = field(default_factory=dict)
    log: list[dict] = field(default_factory=list)
    _counter: int = 0

    # -- setup --

    def add_chain(self, name: str) -> ChainLedger:
        if name in self.chains:
            raise ValidationError(f"chain {name} exists")
        ledger = ChainLedger(name)
        for other in self.chains.values():
            other.registered.add(name)
            ledger.registered.add(other.name)
        self.chains[name] = ledger
        return ledger

    def mint(self, chain: str, base_id: str, owner: str, *, kind: TokenKind = TokenKind.COLLECTION,
             public_data: bytes = b"", private_data: bytes = b"", value: Number = 0) -> XToken:
        if any(base_id == t.base_id for c in self.chains.values() for t in c.tokens.values()):
            raise ValidationError(f"base id {base_id} already minted")
        priv = private_data if kind == TokenKind.COLLECTION else b""
        tok = XToken(f"{chain}:{base_id}:0", base_id, kind, owner, chain,
                     public_data=public_data, private_data=priv, value=value)
        self.chains[chain].tokens[tok.id] = tok
        return tok

    # -- invariants --

    def normal_instances(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for c in self.chains.values():
            for t in c.tokens.values():
                if t.status == TokenStatus.NORMAL:
                    out[t.base_id] = out.get(t.base_id, 0) + 1
        return out

    def single_normal_ok(self) -> bool:
        return all(n <= 1 for n in self.normal_instances().values())

    # -- helpers --

    def _emit(self, step: str, **fields) -> None:
        rec = {"step": step}
        rec.update(fields)
        self.log.append(rec)

    def _message(self, msg_type: str, sender: str, ts: int, expiry: int, price: Decimal,
                 payload: bytes = b"") -> ExchangeMessage:
        msg = ExchangeMessage(msg_type, sender, ts, expiry, price, sha256(payload), payload)
        return replace(msg, signature=self.signer.sign(sender, msg.header_bytes()))

    def _verify(self, msg: ExchangeMessage) -> bool:
        return (self.signer.verify(msg.sender_chain, msg.header_bytes(), msg.signature)
                and sha256(msg.payload) == msg.payload_digest)

    def _key(self, exchange_id: str) -> bytes:
        return hashlib.sha256(f"xchain-key:{self.seed}:{exchange_id}".encode()).digest()

    def _seal(self, ledger: ChainLedger, tok: XToken, exchange_id: str) -> str:
        """Move private data into the home chain's vault; returns its address."""
        if tok.xtype == TokenKind.NON_COLLECTION or tok.private_data is None:
            return ""
        ref = f"{ledger.name}/vault/{exchange_id}/{tok.base_id}"
        nonce = hashlib.sha256(ref.encode()).digest()[:12]
        ct = AESGCM(self._key(exchange_id)).encrypt(nonce, tok.private_data, tok.base_id.encode())
        ledger.vault[ref] = SealedPrivateData(nonce, ct, sha256(tok.private_data))
        tok.private_data = None
        return ref

    def _unseal(self, ledger: ChainLedger, tok: XToken, ref: str) -> None:
        if not ref:
            tok.private_data = b"" if tok.xtype == TokenKind.NON_COLLECTION else tok.private_data
            return
        sealed = ledger.vault.get(ref)
        if sealed is None:
            raise IntegrityError(f"missing sealed private data at {ref}")
        exchange_id = ref.split("/")[2]
        plain = AESGCM(self._key(exchange_id)).decrypt(sealed.nonce, sealed.ciphertext, tok.base_id.encode())
        if sha256(plain) != sealed.digest:
            raise IntegrityError("restored private data does not match its digest")
        tok.private_data = plain
        del ledger.vault[ref]

    def _shadow(self, src: XToken, dest_chain: str, new_owner: str, ts: int, ref: str) -> XToken:
        n = sum(1 for c in self.chains.values() for t in c.tokens.values() if t.base_id == src.base_id)
        shadow = XToken(
            f"{dest_chain}:{src.base_id}:{n}", src.base_id, src.xtype, new_owner, dest_chain,
            status=TokenStatus.EXCHANGE, public_data=src.public_data, private_data=None,
            value=src.value, owner_history=dict(src.owner_history),
            path=list(src.path) + [PathRecord(ts, src.chain, dest_chain, src.owner, new_owner, ref)],
        )
        shadow.owner_history[dest_chain] = new_owner
        return shadow

    def _check_allowed(self, a: ChainLedger, b: ChainLedger, xa: XToken, xb: XToken) -> None:
        if b.name in a.blacklist or a.name in b.blacklist:
            raise BlacklistedError(f"{a.name} and {b.name} are blacklisted for each other")
        pair = frozenset((xa.base_id, xb.base_id))
        if pair in a.barred_pairs or pair in b.barred_pairs:
            raise BlacklistedError(f"token pair {sorted(pair)} is barred from re-exchange")
        if b.name not in a.registered:
            raise ExchangeError(f"{b.name} is not registered on {a.name}")

    # -- protocol --

    def exchange(self, chain_a: str, xa_id: str, chain_b: str, xb_id: str, *, now: int = 0,
                 price: Number = 0, expiry_us: int = DEFAULT_EXCHANGE_EXPIRY_US,
                 cancel_reason: str | None = None, breach_at: int | None = None,
                 on_step: Callable[["CrossChainNetwork", str], None] | None = None) -> tuple[XToken, XToken]:
        """Swap ``xa_id`` on ``chain_a`` with ``xb_id`` on ``chain_b``.

        Returns the shadow tokens ``(BXA on B, AXB on A)``.  ``cancel_reason``
        makes B refuse at the confirmation step; ``breach_at`` (8, 9 or 10)
        makes B break the protocol at that step.  ``on_step`` is called after
        every protocol step, for invariant checks.
        """
        a, b = self.chains[chain_a], self.chains[chain_b]
        xa, xb = a.tokens.get(xa_id), b.tokens.get(xb_id)
        if xa is None or xb is None:
            raise ValidationError("unknown token")
        self._check_allowed(a, b, xa, xb)
        if xa.status != TokenStatus.NORMAL or xb.status != TokenStatus.NORMAL:
            raise ExchangeError("both tokens must be Normal to start an exchange")

        self._counter += 1
        xid = f"x{self._counter}"
        price = cftx(price)
        expiry = now + expiry_us
        clock = [now]
        step = on_step or (lambda net, name: None)

        def tick(name: str) -> int:
            clock[0] += self.latency_us
            if clock[0] > expiry:
                raise ExchangeError(f"exchange {xid} expired before {name}")
            return clock[0]

        minted: list[tuple[ChainLedger, str]] = []
        refs: dict[str, str] = {}

        def unwind() -> None:
            for ledger, tid in minted:
                ledger.tokens[tid].status = TokenStatus.DISABLED
            for ledger, tok in ((a, xa), (b, xb)):
                if tok.base_id in refs:
                    self._unseal(ledger, tok, refs.pop(tok.base_id))
                tok.status = TokenStatus.NORMAL

        try:
            # 5: A locks XA
            xa.status = TokenStatus.EXCHANGE
            self._emit("lock", exchange=xid, chain=a.name, token=xa.id, t=clock[0])
            step(self, "lock-a")

            # 6: request with type, timestamp, expiry, price
            req = self._message("request", a.name, clock[0], expiry, price, xa.xtype.value.encode())
            t = tick("request")
            if not self._verify(req):
                raise ExchangeError("request failed verification")

            # 7: B confirms and locks XB, or cancels
            if cancel_reason is not None:
                self._emit("cancel", exchange=xid, chain=b.name, reason=cancel_reason, t=t)
                unwind()
                step(self, "cancel")
                raise ExchangeCancelled(f"{b.name} cancelled: {cancel_reason}")
            xb.status = TokenStatus.EXCHANGE
            confirm = self._message("confirm", b.name, t, expiry, price, xb.id.encode())
            self._emit("lock", exchange=xid, chain=b.name, token=xb.id, t=t)
            step(self, "lock-b")
            t = tick("confirm")
            if not self._verify(confirm):
                raise ExchangeError("confirmation failed verification")

            # 8: A disables XA and sends its authorized package
            refs[xa.base_id] = self._seal(a, xa, xid)
            xa.status = TokenStatus.DISABLED
            pkg_a = self._message("package", a.name, t, expiry, price,
                                  _encode_token_info(xa, refs[xa.base_id]))
            self._emit("package", exchange=xid, chain=a.name, token=xa.id, t=t)
            step(self, "package-a")
            t = tick("package")

            # 9: B verifies, mints BXA in Exchange state
            if not self._verify(pkg_a):
                raise ExchangeError("package from A failed verification")
            bxa = self._shadow(xa, b.name, xb.owner, t, refs[xa.base_id])
            b.tokens[bxa.id] = bxa
            minted.append((b, bxa.id))
            self._emit("shadow", exchange=xid, chain=b.name, token=bxa.id, t=t)
            step(self, "shadow-b")

            # 10: same for XB in the other direction
            if breach_at == 10:
                raise _Breach(b.name)
            refs[xb.base_id] = self._seal(b, xb, xid)
            xb.status = TokenStatus.DISABLED
            payload = _encode_token_info(xb, refs[xb.base_id])
            pkg_b = self._message("package", b.name, t, expiry, price, payload)
            if breach_at == 9:
                pkg_b = replace(pkg_b, payload=payload + b"tampered")
            step(self, "package-b")
            t = tick("package")
            if not self._verify(pkg_b):
                raise _Breach(b.name)
            axb = self._shadow(xb, a.name, xa.owner, t, refs[xb.base_id])
            a.tokens[axb.id] = axb
            minted.append((a, axb.id))
            self._emit("shadow", exchange=xid, chain=a.name, token=axb.id, t=t)
            step(self, "shadow-a")

            # 11: final confirmations
            if breach_at == 11:
                raise _Breach(b.name)
            t = tick("final confirmation")
            bxa.status = TokenStatus.NORMAL
            axb.status = TokenStatus.NORMAL
            self._emit("final", exchange=xid, t=t, tokens=[bxa.id, axb.id])
            step(self, "final")
            return bxa, axb
        except _Breach as breach:
            # 12: blacklist the breaching chain; the pair never trades again
            unwind()
            a.blacklist.add(breach.chain)
            pair = frozenset((xa.base_id, xb.base_id))
            a.barred_pairs.add(pair)
            b.barred_pairs.add(pair)
            self._emit("blacklist", exchange=xid, chain=breach.chain)
            step(self, "blacklist")
            raise BlacklistedError(f"{breach.chain} broke exchange {xid} and was blacklisted") from None
        except ExchangeCancelled:
            raise
        except ExchangeError:
            unwind()
            self._emit("abort", exchange=xid)
            step(self, "abort")
            raise

    def return_token(self, shadow_chain: str, shadow_id: str, *, now: int = 0) -> XToken:
        """Send a shadow back to its home chain and restore the original there."""
        ledger = self.chains[shadow_chain]
        shadow = ledger.tokens.get(shadow_id)
        if shadow is None:
            raise IntegrityError(f"no token {shadow_id} on {shadow_chain}")
        if shadow.status != TokenStatus.NORMAL:
            raise ExchangeError(f"{shadow_id} is {shadow.status.value}, only Normal shadows return")
        if not shadow.path:
            raise IntegrityError(f"{shadow_id} has no exchange path")
        last = shadow.path[-1]
        home = self.chains.get(last.from_chain)
        originals = [t for t in home.by_base(shadow.base_id) if t.status == TokenStatus.DISABLED] if home else []
        if not originals:
            raise IntegrityError(f"original of {shadow.base_id} not found on {last.from_chain}")
        original = max(originals, key=lambda t: int(t.id.rsplit(":", 1)[1]))
        if shadow.value != original.value:
            raise IntegrityError("carried value differs from the original")
        self._unseal(home, original, last.private_ref)
        t = now + self.latency_us
        shadow.status = TokenStatus.DISABLED
        original.path.append(PathRecord(t, shadow_chain, home.name, shadow.owner, shadow.owner, ""))
        original.owner = shadow.owner
        original.owner_history[home.name] = shadow.owner
        original.status = TokenStatus.NORMAL
        self._emit("return", shadow=shadow.id, original=original.id, t=t)
        return original


class _Breach(Exception):
    def __init__(self, chain: str):
        super().__init__(chain)
        self.chain = chain


def xchain_exchange(net: CrossChainNetwork, chain_a: str, xa_id: str, chain_b: str, xb_id: str,
                    **kwargs) -> tuple[XToken, XToken]:
    return net.exchange(chain_a, xa_id, chain_b, xb_id, **kwargs)


def xchain_return(net: CrossChainNetwork, shadow_chain: str, shadow_id: str, **kwargs) -> XToken:
    return net.return_token(shadow_chain, shadow_id, **kwargs)
