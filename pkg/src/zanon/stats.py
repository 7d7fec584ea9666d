"""Chain-wide statistics: transaction kinds, pool value over time, address
counts, wealth concentration, z-to-z joinsplit usage and value spikes."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Optional

from .chain import ChainView, utc_day
from .errors import IntegrityError
from .model import (
    KIND_ORDER,
    Amount,
    TxKind,
    classify_tx,
    is_standard_address,
    pool_deposit,
    pool_withdrawal,
)


def fmt_ratio(value: Fraction, places: int = 1, percent: bool = True) -> str:
    """Exact fraction → fixed-point decimal string (half-up rounding)."""
    if percent:
        value = value * 100
    d = Decimal(value.numerator) / Decimal(value.denominator)
    return str(d.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


@dataclass
class KindBreakdown:
    counts: dict[TxKind, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def fraction(self, kind: TxKind) -> Fraction:
        return Fraction(self.counts[kind], self.total) if self.total else Fraction(0)

    def percent(self, kind: TxKind) -> str:
        return fmt_ratio(self.fraction(kind))

    def rows(self):
        for kind in KIND_ORDER:
            yield kind.value, self.counts[kind], self.percent(kind)


def kind_breakdown(view: ChainView, height_range: Optional[tuple[int, int]] = None) -> KindBreakdown:
    counts = {k: 0 for k in TxKind}
    lo, hi = height_range if height_range else (0, view.tip_height)
    for tx in view.iter_transactions(lo, hi):
        counts[classify_tx(tx)] += 1
    return KindBreakdown(counts)


@dataclass(frozen=True)
class PoolPoint:
    height: int
    time: int
    deposited: Amount
    withdrawn: Amount
    balance: Amount


@dataclass
class PoolSeries:
    points: list[PoolPoint]

    @property
    def total_deposited(self) -> Amount:
        return sum(p.deposited for p in self.points)

    @property
    def total_withdrawn(self) -> Amount:
        return sum(p.withdrawn for p in self.points)

    @property
    def final_balance(self) -> Amount:
        return self.points[-1].balance if self.points else 0


def pool_series(view: ChainView) -> PoolSeries:
    """Per-block shielded-pool inflow, outflow and running balance.

    A negative running balance can only come from corrupt data and raises
    :class:`IntegrityError`.
    """
    points = []
    balance = 0
    for block in view.blocks:
        dep = sum(pool_deposit(tx) for tx in block.txs)
        wd = sum(pool_withdrawal(tx) for tx in block.txs)
        balance += dep - wd
        if balance < 0:
            raise IntegrityError(f"shielded pool balance negative at height {block.height}")
        points.append(PoolPoint(block.height, block.time, dep, wd, balance))
    return PoolSeries(points)


@dataclass(frozen=True)
class AddressStats:
    distinct_t: int
    ever_shielding_inputs: int
    ever_deshielding_outputs: int


def address_stats(view: ChainView) -> AddressStats:
    """Distinct t-addresses, and those ever used as input to a t-to-z or as
    output of a z-to-t transaction."""
    seen, shielding, deshielding = set(), set(), set()
    for tx in view.transactions:
        kind = classify_tx(tx)
        outs = [o.address for o in tx.vout if is_standard_address(o.address)]
        seen.update(outs)
        if kind is TxKind.SHIELDED:
            shielding.update(a for a in tx.input_addresses() if is_standard_address(a))
        elif kind is TxKind.DESHIELDED:
            deshielding.update(outs)
    return AddressStats(len(seen), len(shielding), len(deshielding))


@dataclass
class WealthDistribution:
    height: int
    address_count: int
    balances: dict[str, Amount]  # nonzero balances only

    @property
    def nonzero_fraction(self) -> Fraction:
        return Fraction(len(self.balances), self.address_count) if self.address_count else Fraction(0)

    @property
    def total(self) -> Amount:
        return sum(self.balances.values())

    def top_percent_share(self, p) -> Fraction:
        """Share of all transparent value held by the richest ``p`` percent of
        nonzero-balance addresses (at least one address)."""
        if not self.balances:
            return Fraction(0)
        p = Fraction(str(p))
        k = max(1, math.ceil(len(self.balances) * p / 100))
        ranked = sorted(self.balances.values(), reverse=True)
        return Fraction(sum(ranked[:k]), self.total)

    @property
    def max_balance(self) -> Amount:
        return max(self.balances.values(), default=0)

    @property
    def richest(self) -> Optional[str]:
        if not self.balances:
            return None
        return min(self.balances, key=lambda a: (-self.balances[a], a))


def wealth_distribution(view: ChainView, height: Optional[int] = None) -> WealthDistribution:
    height = view.tip_height if height is None else height
    balances: dict[str, int] = defaultdict(int)
    for tx in view.iter_transactions(0, height):
        for txin in tx.vin:
            if txin.resolved_address is not None:
                balances[txin.resolved_address] -= txin.resolved_value
        for out in tx.vout:
            balances[out.address] += out.value
    standard = {a: v for a, v in balances.items() if is_standard_address(a)}
    if any(v < 0 for v in standard.values()):
        raise IntegrityError("negative transparent balance; inputs spend unknown outputs")
    return WealthDistribution(height, len(standard), {a: v for a, v in standard.items() if v})


@dataclass
class ZZStats:
    private_tx_count: int
    joinsplit_count: int
    single_js_count: int
    per_day: dict[str, tuple[int, int]] = field(default_factory=dict)  # day -> (txs, joinsplits)

    @property
    def single_js_fraction(self) -> Fraction:
        return Fraction(self.single_js_count, self.private_tx_count) if self.private_tx_count else Fraction(0)


def zz_joinsplit_stats(view: ChainView) -> ZZStats:
    txs = js = single = 0
    per_day: dict[str, list[int]] = {}
    for tx in view.transactions:
        if classify_tx(tx) is not TxKind.PRIVATE:
            continue
        n = len(tx.joinsplits)
        txs += 1
        js += n
        single += n == 1
        day = per_day.setdefault(utc_day(tx.block_time), [0, 0])
        day[0] += 1
        day[1] += n
    return ZZStats(txs, js, single, {d: tuple(v) for d, v in sorted(per_day.items())})


@dataclass(frozen=True)
class Spike:
    height: int
    direction: str  # "deposit" | "withdrawal"
    amount: Amount


def spike_report(view: ChainView, threshold: Amount) -> list[Spike]:
    """Blocks whose total deposit or withdrawal strictly exceeds ``threshold``."""
    spikes = []
    for p in pool_series(view).points:
        if p.deposited > threshold:
            spikes.append(Spike(p.height, "deposit", p.deposited))
        if p.withdrawn > threshold:
            spikes.append(Spike(p.height, "withdrawal", p.withdrawn))
    return spikes


def daily_kind_counts(view: ChainView) -> list[tuple[str, dict[TxKind, int]]]:
    """Cumulative transaction count per kind at the end of each UTC day."""
    running = Counter()
    out = []
    day = None
    for block in view.blocks:
        d = utc_day(block.time)
        if day is not None and d != day:
            out.append((day, {k: running[k] for k in TxKind}))
        day = d
        for tx in block.txs:
            running[classify_tx(tx)] += 1
    if day is not None:
        out.append((day, {k: running[k] for k in TxKind}))
    return out


VALUE_CATEGORIES = ("public", "coingen", "shielded", "deshielded")


def block_value_split(block) -> dict[str, int]:
    """Visible value of a block by category. Fees belong to no category, and
    z-to-z transactions move no visible value."""
    split = dict.fromkeys(VALUE_CATEGORIES, 0)
    for tx in block.txs:
        kind = classify_tx(tx)
        if kind is TxKind.COINGEN:
            split["coingen"] += sum(o.value for o in tx.vout)
        elif kind is TxKind.TRANSPARENT:
            split["public"] += sum(o.value for o in tx.vout)
        else:
            if kind is TxKind.MIXED:
                split["public"] += sum(o.value for o in tx.vout)
            split["shielded"] += pool_deposit(tx)
            split["deshielded"] += pool_withdrawal(tx)
    return split


def daily_value_fractions(view: ChainView) -> list[tuple[str, dict[str, Fraction]]]:
    """Per UTC day, the mean over blocks of each category's share of block value."""
    sums: dict[str, dict[str, Fraction]] = {}
    nblocks: Counter = Counter()
    for block in view.blocks:
        split = block_value_split(block)
        total = sum(split.values())
        if not total:
            continue
        d = utc_day(block.time)
        acc = sums.setdefault(d, dict.fromkeys(VALUE_CATEGORIES, Fraction(0)))
        for cat, v in split.items():
            acc[cat] += Fraction(v, total)
        nblocks[d] += 1
    return [(d, {c: acc[c] / nblocks[d] for c in VALUE_CATEGORIES}) for d, acc in sorted(sums.items())]
