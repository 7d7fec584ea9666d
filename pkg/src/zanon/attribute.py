"""Attribution of shielded-pool activity to founders, miners and everyone else.

Deposits are attributed by their input addresses. Withdrawals are attributed
by three rules:

* founder withdrawal quantum: a z-to-t carrying exactly 250.0001 ZEC out of
  the pool belongs to the founders (heuristic 3);
* pool payouts: a z-to-t with more than 100 distinct output addresses, one of
  them a known mining pool, belongs to that pool (heuristic 4);
* address reuse: a z-to-t paying an address already tagged founder or miner.

Rules that tag new addresses are iterated until no new tags appear, because a
newly tagged payout recipient can reveal further deposits and withdrawals.
"""

from __future__ import annotations

import csv
import enum
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from .chain import ChainView
from .errors import TagConflict, UndefinedResult
from .model import (
    Amount,
    TxKind,
    Transaction,
    classify_tx,
    format_zec,
    is_standard_address,
    pool_deposit,
    pool_withdrawal,
    zec_to_zat,
)
from .tags import Category, Source, Tag, TagRegistry

FOUNDER_WITHDRAWAL = zec_to_zat("250.0001")
FOUNDER_DEPOSIT = zec_to_zat("249.9999")
PAYOUT_MIN_OUTPUTS = 101  # "over 100" distinct output addresses


class Actor(str, enum.Enum):
    FOUNDER = "founder"
    MINER = "miner"
    OTHER = "other"

    def __str__(self):
        return self.value


ACTOR_ORDER = (Actor.FOUNDER, Actor.MINER, Actor.OTHER)


@dataclass
class HeuristicReport:
    txs: list[str] = field(default_factory=list)
    addresses_tagged: int = 0
    conflicts: list[str] = field(default_factory=list)
    anomalies: list[str] = field(default_factory=list)
    pools: dict[str, str] = field(default_factory=dict)  # txid -> pool name


@dataclass
class CoverageCell:
    count: int = 0
    value: Amount = 0


@dataclass
class AttributionResult:
    categories: dict[str, Actor]
    rounds_discovered: dict[str, int]
    new_tags: list[Tag]
    rounds: int
    converged: bool
    deposits: dict[Actor, CoverageCell]
    withdrawals: dict[Actor, CoverageCell]
    h3: HeuristicReport
    h4: HeuristicReport

    @property
    def total_deposited(self) -> Amount:
        return sum(c.value for c in self.deposits.values())

    @property
    def total_withdrawn(self) -> Amount:
        return sum(c.value for c in self.withdrawals.values())

    def withdrawal_share(self, actor: Actor) -> Fraction:
        total = self.total_withdrawn
        if not total:
            raise UndefinedResult("nothing was withdrawn from the pool")
        return Fraction(self.withdrawals[actor].value, total)

    def deposit_share(self, actor: Actor) -> Fraction:
        total = self.total_deposited
        if not total:
            raise UndefinedResult("nothing was deposited into the pool")
        return Fraction(self.deposits[actor].value, total)


def _is_pool_tx(tx: Transaction) -> bool:
    return bool(tx.joinsplits) and classify_tx(tx) is not TxKind.PRIVATE


def _is_miner(registry: TagRegistry, address: str) -> bool:
    return registry.has(address, Category.MINER) or registry.has(address, Category.POOL)


def deposit_category(tx: Transaction, registry: TagRegistry) -> Actor:
    inputs = tx.input_addresses()
    if any(registry.has(a, Category.FOUNDER) for a in inputs):
        return Actor.FOUNDER
    if any(_is_miner(registry, a) for a in inputs):
        return Actor.MINER
    return Actor.OTHER


def attribute_deposits(view: ChainView, registry: TagRegistry) -> dict[str, Actor]:
    """Category of every t-to-z and mixed transaction from its input tags."""
    return {
        tx.txid: deposit_category(tx, registry)
        for tx in view.transactions
        if classify_tx(tx) in (TxKind.SHIELDED, TxKind.MIXED)
    }


def _deshielded(view: ChainView):
    return (tx for tx in view.transactions if classify_tx(tx) is TxKind.DESHIELDED)


def _try_add(registry: TagRegistry, tag: Tag, report: HeuristicReport) -> None:
    try:
        if registry.add(tag):
            report.addresses_tagged += 1
    except TagConflict as exc:
        report.conflicts.append(str(exc))


def apply_founder_withdrawal_heuristic(
    view: ChainView, registry: TagRegistry, quantum: Amount = FOUNDER_WITHDRAWAL
) -> HeuristicReport:
    """Tag z-to-t transactions withdrawing exactly ``quantum`` and their recipients."""
    report = HeuristicReport()
    for tx in _deshielded(view):
        if pool_withdrawal(tx) != quantum:
            continue
        report.txs.append(tx.txid)
        for address in tx.output_addresses():
            if is_standard_address(address):
                _try_add(registry, Tag(address, Category.FOUNDER, "", Source.HEURISTIC3), report)
    return report


def apply_miner_withdrawal_heuristic(
    view: ChainView, registry: TagRegistry, min_outputs: int = PAYOUT_MIN_OUTPUTS
) -> HeuristicReport:
    """Tag large z-to-t payouts that include a known pool address."""
    report = HeuristicReport()
    for tx in _deshielded(view):
        outs = [a for a in tx.output_addresses() if is_standard_address(a)]
        if len(outs) < min_outputs:
            continue
        pools = [(a, registry.pool_name(a)) for a in outs if registry.has(a, Category.POOL)]
        if not pools:
            continue
        name = pools[0][1]
        if len({n for _, n in pools}) > 1:
            report.anomalies.append(
                f"{tx.txid}: pays addresses of several pools {sorted({n for _, n in pools})}; "
                f"attributed to {name}"
            )
        report.txs.append(tx.txid)
        report.pools[tx.txid] = name
        pool_addresses = {a for a, _ in pools}
        for address in outs:
            if address not in pool_addresses:
                _try_add(registry, Tag(address, Category.MINER, "", Source.HEURISTIC4), report)
    return report


def _categorize(view, registry, h3_txs, h4_txs, address_reuse=True) -> dict[str, Actor]:
    cats = {}
    for tx in view.transactions:
        if not _is_pool_tx(tx):
            continue
        if tx.vin:
            cats[tx.txid] = deposit_category(tx, registry)
            continue
        outs = [a for a in tx.output_addresses() if is_standard_address(a)] if address_reuse else []
        if tx.txid in h3_txs or any(registry.has(a, Category.FOUNDER) for a in outs):
            cats[tx.txid] = Actor.FOUNDER
        elif tx.txid in h4_txs or any(_is_miner(registry, a) for a in outs):
            cats[tx.txid] = Actor.MINER
        else:
            cats[tx.txid] = Actor.OTHER
    return cats


def run_pipeline(
    view: ChainView,
    registry: TagRegistry,
    max_rounds: int = 10,
    use_h3: bool = True,
    use_h4: bool = True,
    address_reuse: bool = True,
) -> AttributionResult:
    """Iterate deposit attribution and the withdrawal heuristics to a fixpoint.

    ``registry`` is not modified; the derived tags are returned in the result.
    Every Shielded, Deshielded and Mixed transaction gets exactly one category.
    """
    reg = registry.copy()
    before = set(reg)
    discovered: dict[str, int] = {}
    h3, h4 = HeuristicReport(), HeuristicReport()
    h3_txs, h4_txs = set(), set()
    cats: dict[str, Actor] = {}
    converged = False
    rounds = 0
    while rounds < max_rounds:
        rounds += 1
        size = len(reg)
        for enabled, apply, acc, seen in (
            (use_h3, apply_founder_withdrawal_heuristic, h3, h3_txs),
            (use_h4, apply_miner_withdrawal_heuristic, h4, h4_txs),
        ):
            if not enabled:
                continue
            r = apply(view, reg)
            for txid in r.txs:
                if txid not in seen:
                    seen.add(txid)
                    acc.txs.append(txid)
            acc.addresses_tagged += r.addresses_tagged
            acc.conflicts += [c for c in r.conflicts if c not in acc.conflicts]
            acc.anomalies += [a for a in r.anomalies if a not in acc.anomalies]
            acc.pools.update(r.pools)
        prev, cats = cats, _categorize(view, reg, h3_txs, h4_txs, address_reuse)
        for txid, cat in cats.items():
            if cat is not prev.get(txid):
                discovered[txid] = rounds
        if len(reg) == size:
            converged = True
            break
    if not rounds:
        cats = _categorize(view, reg, h3_txs, h4_txs, address_reuse)
    # Untagged transactions report round 0.
    for txid, cat in cats.items():
        if cat is Actor.OTHER:
            discovered.pop(txid, None)
    deposits = {a: CoverageCell() for a in ACTOR_ORDER}
    withdrawals = {a: CoverageCell() for a in ACTOR_ORDER}
    for tx in view.transactions:
        cat = cats.get(tx.txid)
        if cat is None:
            continue
        d, w = pool_deposit(tx), pool_withdrawal(tx)
        if d:
            deposits[cat].count += 1
            deposits[cat].value += d
        if w:
            withdrawals[cat].count += 1
            withdrawals[cat].value += w
    new_tags = [t for t in reg if t not in before]
    return AttributionResult(cats, discovered, new_tags, rounds, converged, deposits, withdrawals, h3, h4)


def write_attribution_csv(view: ChainView, result: AttributionResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["txid", "kind", "category", "value_zat", "round_discovered"])
        for tx in view.transactions:
            cat = result.categories.get(tx.txid)
            if cat is None:
                continue
            w.writerow([
                tx.txid,
                classify_tx(tx).value,
                cat.value,
                pool_deposit(tx) + pool_withdrawal(tx),
                result.rounds_discovered.get(tx.txid, 0),
            ])


@dataclass(frozen=True)
class FounderRow:
    address: str
    first_height: int
    deposits: int
    total: Amount
    quantum_deposits: int


@dataclass
class FounderAddressReport:
    rows: list[FounderRow]
    quantum: Amount

    @property
    def total_deposits(self) -> int:
        return sum(r.deposits for r in self.rows)

    @property
    def total_value(self) -> Amount:
        return sum(r.total for r in self.rows)

    @property
    def total_quantum(self) -> int:
        return sum(r.quantum_deposits for r in self.rows)

    def csv_rows(self):
        for i, r in enumerate(self.rows, 1):
            yield [i, r.address, r.deposits, r.total, format_zec(r.total), r.quantum_deposits]
        yield ["total", "", self.total_deposits, self.total_value, format_zec(self.total_value),
               self.total_quantum]


def founder_report(
    view: ChainView, registry: TagRegistry, quantum: Amount = FOUNDER_DEPOSIT
) -> FounderAddressReport:
    """Per founder address: deposit count, value deposited and deposits of
    exactly ``quantum``. A deposit with several founder inputs is credited to
    the first one listed."""
    stats: dict[str, list] = {}
    for tx in view.transactions:
        if classify_tx(tx) not in (TxKind.SHIELDED, TxKind.MIXED):
            continue
        founder = next((a for a in tx.input_addresses() if registry.has(a, Category.FOUNDER)), None)
        if founder is None:
            continue
        value = pool_deposit(tx)
        row = stats.setdefault(founder, [tx.block_height, 0, 0, 0])
        row[1] += 1
        row[2] += value
        row[3] += value == quantum
    rows = [FounderRow(a, *v) for a, v in stats.items()]
    rows.sort(key=lambda r: (r.first_height, r.address))
    return FounderAddressReport(rows, quantum)


def interval_stats(
    view: ChainView,
    value: Amount,
    window: tuple[int, int] = (6, 10),
    direction: str = "deposit",
) -> Fraction:
    """Fraction of consecutive same-value pool transactions whose block gap
    lies in ``window`` (inclusive)."""
    if direction == "deposit":
        txids = view.deposits_of_value(value)
    elif direction == "withdrawal":
        txids = view.withdrawals_of_value(value)
    else:
        raise ValueError(f"direction must be deposit or withdrawal, not {direction!r}")
    heights = sorted(view.tx(t).block_height for t in txids)
    if len(heights) < 2:
        raise UndefinedResult(f"need at least two {direction}s of {format_zec(value)} ZEC")
    lo, hi = window
    gaps = [b - a for a, b in zip(heights, heights[1:])]
    return Fraction(sum(lo <= g <= hi for g in gaps), len(gaps))


def category_counts(result: AttributionResult) -> Counter:
    return Counter(result.categories.values())
