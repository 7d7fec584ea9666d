"""Scan for pool deposits matching a published price schedule.

A deposit is a candidate payment if it is within ``deposit_tol`` of a listed
price, is not made by a founder or miner, and its input addresses

1. never received a z-to-t payout before the deposit,
2. appear in at most ``activity_limit`` transactions over the whole chain,
3. belong to a cluster whose pool deposits in the same period total within
   ``cluster_tol`` of a listed price.

Clusters here should be built with change linking enabled.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Optional

from .attribute import Actor, AttributionResult
from .chain import ChainView, utc_month
from .cluster import ClusterSet
from .errors import ConfigError, ParseError
from .model import (
    ZAT_PER_ZEC,
    Amount,
    TxKind,
    classify_tx,
    format_zec,
    is_standard_address,
    pool_deposit,
    zec_to_zat,
)
from .tags import Category, TagRegistry

SLIDING_WINDOW_SECONDS = 30 * 86400


@dataclass(frozen=True)
class PriceSchedule:
    months: tuple[tuple[str, tuple[Amount, ...]], ...]

    def __post_init__(self):
        if not self.months:
            raise ConfigError("price schedule is empty")
        for month, amounts in self.months:
            if not amounts or any(a <= 0 for a in amounts):
                raise ConfigError(f"{month}: schedule amounts must be positive")

    @property
    def amounts(self) -> tuple[Amount, ...]:
        return tuple(sorted({a for _, amounts in self.months for a in amounts}))

    @classmethod
    def from_dict(cls, months: dict[str, list]) -> "PriceSchedule":
        return cls(tuple(
            (m, tuple(sorted({zec_to_zat(a) for a in amounts}))) for m, amounts in sorted(months.items())
        ))

    @classmethod
    def load(cls, path) -> "PriceSchedule":
        months: dict[str, list] = defaultdict(list)
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if not {"month", "amount_zec"} <= set(reader.fieldnames or ()):
                raise ParseError("schedule CSV needs columns month,amount_zec", 1)
            for row in reader:
                try:
                    datetime.strptime(row["month"].strip(), "%Y-%m")
                    months[row["month"].strip()].append(row["amount_zec"].strip())
                except ValueError as exc:
                    raise ParseError(str(exc), reader.line_num) from None
        return cls.from_dict(months)


# Prices announced for the 2017 monthly dumps.
DEFAULT_SCHEDULE = PriceSchedule.from_dict({
    "2017-05": ["100"],
    "2017-06": ["100"],
    "2017-07": ["200", "400"],
    "2017-08": ["500"],
    "2017-09": ["100", "200", "500"],
    "2017-10": ["500"],
})


@dataclass
class TsbCandidate:
    cluster_id: int
    period: str
    matched_amount: Amount
    cluster_total: Amount
    deposit_txids: tuple[str, ...]
    input_addresses: tuple[str, ...]
    tx_activity_count: int
    prior_pool_receipt: bool = False


@dataclass
class TsbScan:
    candidates: list[TsbCandidate]
    periods: list[str]
    amounts: tuple[Amount, ...]

    def table(self) -> list[tuple[str, dict[Amount, int]]]:
        counts = {p: dict.fromkeys(self.amounts, 0) for p in self.periods}
        for c in self.candidates:
            counts[c.period][c.matched_amount] += 1
        return [(p, counts[p]) for p in self.periods]

    def flagged_clusters(self) -> set[int]:
        return {c.cluster_id for c in self.candidates}


def _period_label(ts: int, split: Optional[date]) -> str:
    month = utc_month(ts)
    if split is not None and month == split.strftime("%Y-%m"):
        day = datetime.fromtimestamp(ts, tz=timezone.utc).date()
        return f"{month}-{'after' if day >= split else 'before'}"
    return month


def _periods(view: ChainView, split: Optional[date]) -> list[str]:
    labels = []
    for block in view.blocks:
        label = _period_label(block.time, split)
        if not labels or labels[-1] != label:
            labels.append(label)
    return labels


def _closest(value: Amount, amounts, tol: Amount) -> Optional[Amount]:
    best = min(amounts, key=lambda a: (abs(a - value), a))
    return best if abs(best - value) <= tol else None


def _activity(view: ChainView, address: str) -> int:
    return len(set(view.txids_with_input(address)) | set(view.txids_with_output(address)))


def _first_deshielded_receipt(view: ChainView) -> dict[str, int]:
    """Earliest chain position at which each address received a z-to-t output."""
    first: dict[str, int] = {}
    for pos, tx in enumerate(view.transactions):
        if classify_tx(tx) is TxKind.DESHIELDED:
            for out in tx.vout:
                first.setdefault(out.address, pos)
    return first


def _deposit_cluster(tx, clusters: ClusterSet) -> Optional[int]:
    for a in tx.input_addresses():
        if is_standard_address(a) and a in clusters:
            return clusters.cluster_of(a)
    return None


def scan(
    view: ChainView,
    clusters: ClusterSet,
    registry: TagRegistry,
    schedule: PriceSchedule = DEFAULT_SCHEDULE,
    deposit_tol: Amount = 5 * ZAT_PER_ZEC,
    cluster_tol: Amount = 1 * ZAT_PER_ZEC,
    activity_limit: int = 250,
    split_date: Optional[date] = None,
    window: str = "calendar",
    attribution: Optional[AttributionResult] = None,
) -> TsbScan:
    if window not in ("calendar", "sliding"):
        raise ConfigError(f"window must be calendar or sliding, not {window!r}")
    amounts = schedule.amounts
    receipts = _first_deshielded_receipt(view)

    # Pool deposits per cluster, in chain order: (time, period, value).
    cluster_deposits: dict[int, list[tuple[int, str, Amount]]] = defaultdict(list)
    deposits = []
    for pos, tx in enumerate(view.transactions):
        if classify_tx(tx) not in (TxKind.SHIELDED, TxKind.MIXED):
            continue
        value = pool_deposit(tx)
        cid = _deposit_cluster(tx, clusters)
        if cid is None or not value:
            continue
        period = _period_label(tx.block_time, split_date)
        cluster_deposits[cid].append((tx.block_time, period, value))
        deposits.append((pos, tx, cid, period, value))

    def cluster_total(cid, tx, period):
        if window == "calendar":
            return sum(v for _, p, v in cluster_deposits[cid] if p == period)
        lo = tx.block_time - SLIDING_WINDOW_SECONDS
        return sum(v for t, _, v in cluster_deposits[cid] if lo < t <= tx.block_time)

    groups: dict[tuple[int, str], TsbCandidate] = {}
    for pos, tx, cid, period, value in deposits:
        if _closest(value, amounts, deposit_tol) is None:
            continue
        inputs = [a for a in tx.input_addresses() if is_standard_address(a)]
        if any(registry.has(a, c) for a in inputs for c in (Category.FOUNDER, Category.MINER, Category.POOL)):
            continue
        if attribution is not None and attribution.categories.get(tx.txid) in (Actor.FOUNDER, Actor.MINER):
            continue
        if any(receipts.get(a, pos) < pos for a in inputs):
            continue
        activity = max(_activity(view, a) for a in inputs)
        if activity > activity_limit:
            continue
        total = cluster_total(cid, tx, period)
        matched = _closest(total, amounts, cluster_tol)
        if matched is None:
            continue
        key = (cid, period)
        if key in groups:
            c = groups[key]
            c.deposit_txids += (tx.txid,)
            c.input_addresses += tuple(a for a in inputs if a not in c.input_addresses)
            c.tx_activity_count = max(c.tx_activity_count, activity)
            if window == "sliding":
                c.cluster_total = max(c.cluster_total, total)
                c.matched_amount = _closest(c.cluster_total, amounts, cluster_tol) or c.matched_amount
        else:
            groups[key] = TsbCandidate(cid, period, matched, total, (tx.txid,), tuple(inputs), activity)
    periods = _periods(view, split_date)
    order = {p: i for i, p in enumerate(periods)}
    candidates = sorted(groups.values(), key=lambda c: (order[c.period], c.cluster_id))
    return TsbScan(candidates, periods, amounts)


def check_candidate(
    view: ChainView,
    clusters: ClusterSet,
    candidate: TsbCandidate,
    schedule: PriceSchedule,
    deposit_tol: Amount,
    cluster_tol: Amount,
    activity_limit: int,
    split_date: Optional[date] = None,
) -> bool:
    """Independent re-check of the three conditions (calendar window)."""
    amounts = schedule.amounts
    for txid in candidate.deposit_txids:
        tx = view.tx(txid)
        if min(abs(pool_deposit(tx) - a) for a in amounts) > deposit_tol:
            return False
        pos = view.position(txid)
        for a in tx.input_addresses():
            for other in view.txids_with_output(a):
                if view.position(other) < pos and classify_tx(view.tx(other)) is TxKind.DESHIELDED:
                    return False
            if _activity(view, a) > activity_limit:
                return False
    total = 0
    for tx in view.transactions:
        if classify_tx(tx) in (TxKind.SHIELDED, TxKind.MIXED) and pool_deposit(tx):
            if _period_label(tx.block_time, split_date) != candidate.period:
                continue
            if any(clusters.get(a) == candidate.cluster_id for a in tx.input_addresses()):
                total += pool_deposit(tx)
    return min(abs(total - a) for a in amounts) <= cluster_tol


@dataclass
class CandidateDetail:
    cluster_id: int
    funding: list[tuple[str, Amount]]  # (source label, value) by value descending
    history: list[tuple[str, Amount]]  # (period, deposited) in period order
    repeat_pattern: bool
    matching_periods: list[str] = field(default_factory=list)


def _source_label(tx, clusters: ClusterSet, registry: TagRegistry) -> str:
    kind = classify_tx(tx)
    if kind is TxKind.COINGEN:
        return "coingen"
    if kind is TxKind.DESHIELDED:
        return "pool"
    inputs = [a for a in tx.input_addresses() if is_standard_address(a)]
    if not inputs:
        return "pool"
    cid = clusters.get(inputs[0])
    labels = sorted({registry.label(m) for m in clusters.members(cid) if registry.label(m)})
    return f"cluster {cid}" + (f" ({', '.join(labels)})" if labels else "")


def candidate_detail(
    view: ChainView,
    clusters: ClusterSet,
    registry: TagRegistry,
    candidate: TsbCandidate,
    schedule: PriceSchedule = DEFAULT_SCHEDULE,
    cluster_tol: Amount = 1 * ZAT_PER_ZEC,
    split_date: Optional[date] = None,
) -> CandidateDetail:
    """Where a candidate cluster's transparent funds came from, and its deposit history."""
    members = set(clusters.members(candidate.cluster_id))
    funding: dict[str, int] = defaultdict(int)
    history: dict[str, int] = {}
    for tx in view.transactions:
        inputs = set(tx.input_addresses()) if tx.vin else set()
        if inputs & members:
            if classify_tx(tx) in (TxKind.SHIELDED, TxKind.MIXED) and pool_deposit(tx):
                period = _period_label(tx.block_time, split_date)
                history[period] = history.get(period, 0) + pool_deposit(tx)
            continue
        received = sum(o.value for o in tx.vout if o.address in members)
        if received:
            funding[_source_label(tx, clusters, registry)] += received
    amounts = schedule.amounts
    matching = [p for p, v in history.items() if _closest(v, amounts, cluster_tol) is not None]
    return CandidateDetail(
        candidate.cluster_id,
        sorted(funding.items(), key=lambda kv: (-kv[1], kv[0])),
        list(history.items()),
        len(matching) >= 2,
        matching,
    )


def write_table_csv(result: TsbScan, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["period"] + [format_zec(a) for a in result.amounts])
        for period, counts in result.table():
            w.writerow([period] + [counts[a] for a in result.amounts])


def write_candidates_csv(result: TsbScan, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster_id", "period", "matched_zat", "cluster_total_zat", "tx_activity_count",
                    "deposit_txids"])
        for c in result.candidates:
            w.writerow([c.cluster_id, c.period, c.matched_amount, c.cluster_total, c.tx_activity_count,
                        " ".join(c.deposit_txids)])
