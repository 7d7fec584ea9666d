"""Address labels: founders, mining pools, miners, exchanges and services."""

from __future__ import annotations

import csv
import enum
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .chain import ChainView
from .errors import ParseError, TagConflict
from .model import is_standard_address


class Category(str, enum.Enum):
    FOUNDER = "founder"
    POOL = "pool"
    MINER = "miner"
    EXCHANGE = "exchange"
    SERVICE = "service"
    USER = "user"

    def __str__(self):
        return self.value


class Source(str, enum.Enum):
    PARAMS = "params"
    CSV = "csv"
    HEURISTIC3 = "heuristic3"
    HEURISTIC4 = "heuristic4"
    COINGEN = "coingen"

    def __str__(self):
        return self.value


# Categories that exclude each other on a single address.
_EXCLUSIVE = {
    Category.FOUNDER: {Category.MINER, Category.POOL},
    Category.MINER: {Category.FOUNDER},
    Category.POOL: {Category.FOUNDER},
}
# Categories that carry a name which must agree across tags of one address.
_NAMED = {Category.POOL, Category.EXCHANGE, Category.SERVICE}

_ADDRESS_RE = re.compile(r"^t[1-9A-HJ-NP-Za-km-z]{20,60}$")


def valid_t_address(s: str) -> bool:
    """Loose base58 t-address shape check used for external label files."""
    return bool(_ADDRESS_RE.match(s))


@dataclass(frozen=True)
class Tag:
    address: str
    category: Category
    name: str = ""
    source: Source = Source.CSV
    run_id: str = field(default="", compare=False)


class TagRegistry:
    def __init__(self, run_id: str = ""):
        self.run_id = run_id
        self._by_address: dict[str, set[Tag]] = defaultdict(set)
        self._by_category: dict[Category, set[str]] = defaultdict(set)
        self.rejected: list[tuple[Optional[int], str]] = []

    def __len__(self):
        return sum(len(t) for t in self._by_address.values())

    def __iter__(self):
        for address in sorted(self._by_address):
            yield from sorted(self._by_address[address], key=_tag_key)

    def copy(self) -> "TagRegistry":
        other = TagRegistry(self.run_id)
        for tag in self:
            other._insert(tag)
        return other

    def check(self, tag: Tag) -> None:
        """Raise :class:`TagConflict` if ``tag`` cannot coexist with existing tags."""
        for old in self._by_address.get(tag.address, ()):
            if old == tag:
                continue
            if old.category in _EXCLUSIVE.get(tag.category, ()):
                raise TagConflict(
                    f"{tag.address}: {tag.category} conflicts with existing {old.category}"
                )
            if old.category == tag.category and tag.category in _NAMED and old.name != tag.name:
                raise TagConflict(
                    f"{tag.address}: already {old.category} {old.name!r}, not {tag.name!r}"
                )
            if old.source == tag.source:
                raise TagConflict(
                    f"{tag.address}: source {tag.source} already assigned {old.category}"
                )

    def add(self, tag: Tag) -> bool:
        """Insert ``tag``. Returns False if it is already present."""
        if not tag.address:
            raise TagConflict("empty address")
        if tag in self._by_address.get(tag.address, ()):
            return False
        self.check(tag)
        if not tag.run_id and self.run_id:
            tag = Tag(tag.address, tag.category, tag.name, tag.source, self.run_id)
        self._insert(tag)
        return True

    def _insert(self, tag):
        self._by_address[tag.address].add(tag)
        self._by_category[tag.category].add(tag.address)

    def tags_of(self, address: str) -> frozenset[Tag]:
        return frozenset(self._by_address.get(address, ()))

    def categories_of(self, address: str) -> set[Category]:
        return {t.category for t in self._by_address.get(address, ())}

    def has(self, address: str, category: Category) -> bool:
        return address in self._by_category.get(category, ())

    def addresses(self, category: Category) -> frozenset[str]:
        return frozenset(self._by_category.get(category, ()))

    def name_of(self, address: str, category: Category) -> Optional[str]:
        for t in self._by_address.get(address, ()):
            if t.category == category:
                return t.name
        return None

    def pool_name(self, address: str) -> Optional[str]:
        return self.name_of(address, Category.POOL)

    def label(self, address: str) -> str:
        """Most specific human label, e.g. ``exchange:Bitfinex``, or ``""``."""
        for cat in (Category.FOUNDER, Category.POOL, Category.EXCHANGE, Category.SERVICE,
                    Category.MINER, Category.USER):
            name = self.name_of(address, cat)
            if name is not None:
                return f"{cat}:{name}" if name else str(cat)
        return ""

    def load_founder_params(self, path) -> int:
        """Tag every address listed in ``path`` (one per line) as a founder.

        Blank lines and ``#`` comments are skipped; duplicates count once.
        """
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        addresses = []
        for lineno, raw in enumerate(lines, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if not valid_t_address(line):
                raise ParseError(f"malformed founder address {line!r}", lineno)
            addresses.append(line)
        count = 0
        for address in dict.fromkeys(addresses):
            if self.add(Tag(address, Category.FOUNDER, "", Source.PARAMS)):
                count += 1
        return count

    def import_tags_csv(self, path) -> int:
        """Load ``address,category,name,source`` rows; conflicting rows are
        rejected individually and recorded in :attr:`rejected`."""
        count = 0
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"address", "category", "name", "source"} - set(reader.fieldnames or ())
            if missing:
                raise ParseError(f"tag CSV lacks columns {sorted(missing)}", 1)
            for row in reader:
                lineno = reader.line_num
                try:
                    tag = Tag(
                        row["address"].strip(),
                        Category(row["category"].strip()),
                        (row["name"] or "").strip(),
                        Source((row["source"] or "csv").strip() or "csv"),
                    )
                except ValueError as exc:
                    self.rejected.append((lineno, str(exc)))
                    continue
                if not valid_t_address(tag.address):
                    self.rejected.append((lineno, f"malformed address {tag.address!r}"))
                    continue
                try:
                    if self.add(tag):
                        count += 1
                except TagConflict as exc:
                    self.rejected.append((lineno, str(exc)))
        return count

    def rows(self) -> list[tuple[str, str, str, str, str]]:
        return [(t.address, t.category.value, t.name, t.source.value, t.run_id) for t in self]

    @classmethod
    def from_rows(cls, rows: Iterable[tuple], run_id: str = "") -> "TagRegistry":
        reg = cls(run_id)
        for address, category, name, source, rid in rows:
            reg.add(Tag(address, Category(category), name, Source(source), rid))
        return reg


def _tag_key(t: Tag):
    return (t.category.value, t.name, t.source.value)


def write_tags_csv(tags: Iterable[Tag], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["address", "category", "name", "source"])
        for t in tags:
            w.writerow([t.address, t.category.value, t.name, t.source.value])


def derive_miner_tags(view: ChainView, registry: TagRegistry) -> int:
    """Tag every non-founder coingen recipient as a miner."""
    count = 0
    for block in view.blocks:
        for out in block.txs[0].vout if block.txs else ():
            address = out.address
            if not is_standard_address(address) or registry.has(address, Category.FOUNDER):
                continue
            if registry.add(Tag(address, Category.MINER, "", Source.COINGEN)):
                count += 1
    return count


def cluster_tags(registry: TagRegistry, clusters) -> dict[int, Counter]:
    """Per-cluster count of member addresses holding each category.

    Only clusters with at least one tagged member appear in the result.
    """
    hist: dict[int, Counter] = {}
    for category in Category:
        for address in registry.addresses(category):
            cid = clusters.get(address)
            if cid is None:
                continue
            hist.setdefault(cid, Counter())[category.value] += 1
    return dict(sorted(hist.items()))
