"""Round-trip linking: a value deposited once and withdrawn once, shortly after.

If exactly one t-to-z transaction carries value ``v`` into the pool and exactly
one z-to-t transaction later carries ``v`` out, the two are very likely the
same coins. Uniqueness is checked over the whole chain, not just the window.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .attribute import Actor, AttributionResult
from .chain import ChainView
from .errors import UndefinedResult
from .model import Amount, decimal_places, pool_withdrawal


@dataclass(frozen=True)
class RoundTrip:
    value: Amount
    deposit_txid: str
    deposit_height: int
    withdrawal_txid: str
    withdrawal_height: int

    @property
    def gap(self) -> int:
        return self.withdrawal_height - self.deposit_height


def _unique_pairs(view: ChainView):
    """(value, deposit tx, withdrawal tx) for every value seen once each way."""
    withdrawals = view.withdrawal_values()
    for value, deposit_ids in view.deposit_values().items():
        wids = withdrawals.get(value)
        if len(deposit_ids) == 1 and wids is not None and len(wids) == 1:
            yield value, view.tx(deposit_ids[0]), view.tx(wids[0])


def find_round_trips(view: ChainView, max_gap: int) -> list[RoundTrip]:
    """Unique-value deposit/withdrawal pairs with 1 <= gap <= ``max_gap`` blocks,
    ordered by deposit height then deposit txid."""
    if max_gap < 1:
        raise ValueError("max_gap must be at least 1")
    trips = []
    for value, dep, wd in _unique_pairs(view):
        gap = wd.block_height - dep.block_height
        if 1 <= gap <= max_gap:
            trips.append(RoundTrip(value, dep.txid, dep.block_height, wd.txid, wd.block_height))
    trips.sort(key=lambda r: (r.deposit_height, r.deposit_txid))
    return trips


def linked_value_curve(view: ChainView, gaps: Iterable[int]) -> list[tuple[int, int, Amount]]:
    """(gap, link count, linked value) for each gap, from one pass over the pairs."""
    gaps = list(gaps)
    if gaps != sorted(gaps):
        raise ValueError("gaps must be sorted ascending")
    pair_gaps = [(wd.block_height - dep.block_height, v) for v, dep, wd in _unique_pairs(view)]
    curve = []
    for g in gaps:
        hits = [v for pg, v in pair_gaps if 1 <= pg <= g]
        curve.append((g, len(hits), sum(hits)))
    return curve


@dataclass
class ValueUniqueness:
    count: int
    histogram: list[int]  # index = decimal places, 0..8

    def fraction_above(self, places: int) -> Fraction:
        if not self.count:
            return Fraction(0)
        return Fraction(sum(self.histogram[places + 1:]), self.count)


def value_uniqueness_stats(round_trips: Iterable[RoundTrip]) -> ValueUniqueness:
    hist = [0] * 9
    n = 0
    for rt in round_trips:
        hist[decimal_places(rt.value)] += 1
        n += 1
    return ValueUniqueness(n, hist)


@dataclass
class AnonymityReduction:
    total_withdrawn: Amount
    founder_value: Amount
    miner_value: Amount
    roundtrip_only_value: Amount

    def _pct(self, v) -> Fraction:
        return Fraction(v * 100, self.total_withdrawn)

    @property
    def founder_pct(self) -> Fraction:
        return self._pct(self.founder_value)

    @property
    def miner_pct(self) -> Fraction:
        return self._pct(self.miner_value)

    @property
    def founder_miner_pct(self) -> Fraction:
        return self._pct(self.founder_value + self.miner_value)

    @property
    def roundtrip_only_pct(self) -> Fraction:
        return self._pct(self.roundtrip_only_value)

    @property
    def total_pct(self) -> Fraction:
        return self.founder_miner_pct + self.roundtrip_only_pct


def anonymity_reduction(
    view: ChainView, attribution: AttributionResult, round_trips: Iterable[RoundTrip]
) -> AnonymityReduction:
    """Share of withdrawn value explained by founder/miner attribution, plus
    round-trip-linked value whose withdrawal is not already attributed."""
    total = attribution.total_withdrawn
    if not total:
        raise UndefinedResult("nothing was withdrawn from the pool")
    extra = 0
    for rt in round_trips:
        if attribution.categories.get(rt.withdrawal_txid, Actor.OTHER) is Actor.OTHER:
            extra += pool_withdrawal(view.tx(rt.withdrawal_txid))
    return AnonymityReduction(
        total,
        attribution.withdrawals[Actor.FOUNDER].value,
        attribution.withdrawals[Actor.MINER].value,
        extra,
    )


def overlap_with_attribution(attribution: AttributionResult, round_trips: Iterable[RoundTrip]) -> Optional[Fraction]:
    """Share of round-trip value whose deposit or withdrawal is founder/miner attributed."""
    total = hit = 0
    for rt in round_trips:
        total += rt.value
        cats = (attribution.categories.get(rt.deposit_txid), attribution.categories.get(rt.withdrawal_txid))
        if any(c in (Actor.FOUNDER, Actor.MINER) for c in cats):
            hit += rt.value
    return Fraction(hit, total) if total else None


def write_round_trips_csv(round_trips: Iterable[RoundTrip], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value_zat", "deposit_txid", "deposit_height", "withdrawal_txid", "withdrawal_height", "gap"])
        for rt in round_trips:
            w.writerow([rt.value, rt.deposit_txid, rt.deposit_height, rt.withdrawal_txid, rt.withdrawal_height, rt.gap])
