"""Ledger data model: blocks, transactions, joinsplits and their classification.

All amounts are integers in zatoshi (1 ZEC = 10**8 zat). Floats never enter
ledger arithmetic; :func:`zec_to_zat` and :func:`format_zec` are the only
conversions to and from the decimal ZEC representation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Iterable, Optional

from .errors import ConservationError, DataError, IntegrityError, UnresolvedInputError

ZAT_PER_ZEC = 100_000_000
# Consensus MAX_MONEY; any accumulator above it means the input is corrupt.
MAX_MONEY = 21_000_000 * ZAT_PER_ZEC

Amount = int

# Outputs whose script has no single transparent address are kept under a
# synthetic key so spends still resolve; they never enter clustering or stats.
NONSTANDARD_PREFIX = "nonstandard:"


def is_standard_address(address: str) -> bool:
    return not address.startswith(NONSTANDARD_PREFIX)


def zec_to_zat(value) -> Amount:
    """Convert a ZEC quantity (str, Decimal or int) to zat, exactly.

    >>> zec_to_zat("250.0001")
    25000010000
    """
    if isinstance(value, float):
        raise TypeError("refusing to convert a float; pass a string or Decimal")
    try:
        d = Decimal(str(value).strip())
    except InvalidOperation:
        raise ValueError(f"not a decimal amount: {value!r}") from None
    if not d.is_finite():
        raise ValueError(f"not a finite amount: {value!r}")
    zat = d * ZAT_PER_ZEC
    if zat != zat.to_integral_value():
        raise ValueError(f"more than 8 decimal places: {value!r}")
    zat = int(zat)
    if zat < 0:
        raise ValueError(f"negative amount: {value!r}")
    return zat


def format_zec(zat: int) -> str:
    """Render zat as a fixed 8-decimal ZEC string, e.g. ``250.00010000``."""
    sign = "-" if zat < 0 else ""
    whole, frac = divmod(abs(zat), ZAT_PER_ZEC)
    return f"{sign}{whole}.{frac:08d}"


def decimal_places(zat: int) -> int:
    """Number of significant decimal places in the ZEC rendering of ``zat``."""
    if zat % ZAT_PER_ZEC == 0:
        return 0
    places = 8
    while zat % 10 == 0:
        zat //= 10
        places -= 1
    return places


def _check_amount(value, what):
    if type(value) is not int or value < 0:
        raise DataError(f"{what} must be a non-negative integer, got {value!r}")
    if value > MAX_MONEY:
        raise IntegrityError(f"{what} exceeds MAX_MONEY: {value}")


def _checked_sum(values: Iterable[int], what: str) -> Amount:
    total = 0
    for v in values:
        total += v
        if total > MAX_MONEY:
            raise IntegrityError(f"{what} accumulator exceeds MAX_MONEY")
    return total


class TxKind(str, enum.Enum):
    COINGEN = "coingen"
    TRANSPARENT = "transparent"
    SHIELDED = "shielded"
    DESHIELDED = "deshielded"
    PRIVATE = "private"
    MIXED = "mixed"

    def __str__(self):
        return self.value


# Row order used by every report (largest to smallest on mainnet).
KIND_ORDER = (
    TxKind.TRANSPARENT,
    TxKind.COINGEN,
    TxKind.DESHIELDED,
    TxKind.SHIELDED,
    TxKind.MIXED,
    TxKind.PRIVATE,
)


@dataclass(frozen=True, slots=True)
class TxIn:
    prev_txid: str
    prev_index: int
    resolved_address: Optional[str] = None
    resolved_value: Optional[Amount] = None

    def __post_init__(self):
        if (self.resolved_address is None) != (self.resolved_value is None):
            raise DataError("resolved address and value must be set together")
        if self.resolved_value is not None:
            _check_amount(self.resolved_value, "input value")

    @property
    def resolved(self) -> bool:
        return self.resolved_address is not None

    @property
    def outpoint(self) -> tuple[str, int]:
        return self.prev_txid, self.prev_index


@dataclass(frozen=True, slots=True)
class TxOut:
    address: str
    value: Amount
    index: int

    def __post_init__(self):
        if not isinstance(self.address, str) or not self.address or self.address != self.address.strip():
            raise DataError(f"bad output address {self.address!r}")
        _check_amount(self.value, "output value")


@dataclass(frozen=True, slots=True)
class JoinSplit:
    vpub_old: Amount
    vpub_new: Amount
    nullifiers: tuple[bytes, bytes]
    commitments: tuple[bytes, bytes]

    def __post_init__(self):
        _check_amount(self.vpub_old, "vpub_old")
        _check_amount(self.vpub_new, "vpub_new")
        if self.vpub_old and self.vpub_new:
            raise DataError("a joinsplit cannot both shield and deshield value")
        if len(self.nullifiers) != 2 or len(self.commitments) != 2:
            raise DataError("a joinsplit carries exactly two nullifiers and two commitments")


@dataclass(frozen=True, slots=True)
class Transaction:
    txid: str
    block_height: int
    block_time: int
    is_coinbase: bool = False
    vin: tuple[TxIn, ...] = ()
    vout: tuple[TxOut, ...] = ()
    joinsplits: tuple[JoinSplit, ...] = ()

    def __post_init__(self):
        if not self.txid:
            raise DataError("empty txid")
        if self.is_coinbase and (self.vin or self.joinsplits):
            raise DataError(f"coinbase {self.txid} has inputs or joinsplits")
        for i, out in enumerate(self.vout):
            if out.index != i:
                raise DataError(f"{self.txid}: output indices must be dense from 0")

    @property
    def kind(self) -> TxKind:
        return classify_tx(self)

    def input_addresses(self) -> list[str]:
        """Distinct resolved input addresses in first-seen order."""
        seen = []
        for txin in self.vin:
            if txin.resolved_address is None:
                raise UnresolvedInputError(
                    f"{self.txid}: input {txin.prev_txid}:{txin.prev_index} is unresolved"
                )
            if txin.resolved_address not in seen:
                seen.append(txin.resolved_address)
        return seen

    def output_addresses(self) -> list[str]:
        seen = []
        for out in self.vout:
            if out.address not in seen:
                seen.append(out.address)
        return seen


@dataclass(frozen=True, slots=True)
class Block:
    height: int
    hash: str
    time: int
    txs: tuple[Transaction, ...] = field(default=())

    def __post_init__(self):
        if self.txs and not self.txs[0].is_coinbase:
            raise DataError(f"block {self.height}: first transaction is not a coinbase")
        if any(tx.is_coinbase for tx in self.txs[1:]):
            raise DataError(f"block {self.height}: coinbase after position 0")


def classify_tx(tx: Transaction) -> TxKind:
    if tx.is_coinbase:
        return TxKind.COINGEN
    if not tx.joinsplits:
        return TxKind.TRANSPARENT
    if tx.vin:
        return TxKind.MIXED if tx.vout else TxKind.SHIELDED
    return TxKind.DESHIELDED if tx.vout else TxKind.PRIVATE


def pool_deposit(tx: Transaction) -> Amount:
    return _checked_sum((js.vpub_old for js in tx.joinsplits), "vpub_old")


def pool_withdrawal(tx: Transaction) -> Amount:
    return _checked_sum((js.vpub_new for js in tx.joinsplits), "vpub_new")


def conservation_check(tx: Transaction) -> Amount:
    """Return the fee implied by value conservation.

    Coin generation creates value by definition and is reported with fee 0.
    Raises :class:`ConservationError` when outputs exceed inputs.
    """
    if tx.is_coinbase:
        return 0
    for txin in tx.vin:
        if not txin.resolved:
            raise UnresolvedInputError(f"{tx.txid}: conservation needs resolved inputs")
    value_in = _checked_sum((i.resolved_value for i in tx.vin), "input") + pool_withdrawal(tx)
    value_out = _checked_sum((o.value for o in tx.vout), "output") + pool_deposit(tx)
    fee = value_in - value_out
    if fee < 0:
        raise ConservationError(tx.txid, fee)
    return fee
