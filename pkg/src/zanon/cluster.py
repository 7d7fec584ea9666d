"""Address clustering.

Heuristic 1 (multi-input): all transparent input addresses of one transaction
share an owner, whatever the transaction kind. Heuristic 2 (change): a
joinsplit transaction with transparent inputs and exactly one transparent
output address links that output to the inputs' owner. Heuristic 2 is off by
default and turned on only for the Shadow Brokers scan.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from .chain import ChainView
from .dsu import DisjointSet
from .errors import NotFound
from .model import is_standard_address


@dataclass(frozen=True)
class ChangeLink:
    txid: str
    input_address: str  # representative: lexicographically smallest input address
    output_address: str


class ClusterSet:
    """Immutable partition of addresses with size-ordered cluster ids.

    Id 0 is the largest cluster. Ties are broken by earliest first-appearance
    height, then by the smallest member address.
    """

    def __init__(self, groups: Iterable[list[str]], first_seen: dict[str, int]):
        keyed = []
        for members in groups:
            members = sorted(members)
            keyed.append((-len(members), min(first_seen[a] for a in members), members[0], members))
        keyed.sort(key=lambda k: k[:3])
        self._members: list[tuple[str, ...]] = [tuple(k[3]) for k in keyed]
        self._id: dict[str, int] = {}
        for cid, members in enumerate(self._members):
            for a in members:
                self._id[a] = cid

    def __len__(self):
        return len(self._members)

    def __contains__(self, address):
        return address in self._id

    def __eq__(self, other):
        return isinstance(other, ClusterSet) and self._members == other._members

    def cluster_of(self, address: str) -> int:
        try:
            return self._id[address]
        except KeyError:
            raise NotFound(f"address {address} was never observed") from None

    def get(self, address: str, default=None) -> Optional[int]:
        return self._id.get(address, default)

    def members(self, cluster_id: int) -> tuple[str, ...]:
        return self._members[cluster_id]

    def size(self, cluster_id: int) -> int:
        return len(self._members[cluster_id])

    @property
    def address_count(self) -> int:
        return len(self._id)

    def multi_address_count(self) -> int:
        return sum(1 for m in self._members if len(m) > 1)

    def partition(self) -> set[frozenset[str]]:
        return {frozenset(m) for m in self._members}

    def rows(self) -> Iterator[tuple[int, int, str]]:
        for cid, members in enumerate(self._members):
            for a in members:
                yield cid, len(members), a


def cluster_of(clusters: ClusterSet, address: str) -> int:
    return clusters.cluster_of(address)


def find_change_links(view: ChainView, exclusions: Iterable[str] = ()) -> list[ChangeLink]:
    excluded = set(exclusions)
    links = []
    for tx in view.transactions:
        if not tx.joinsplits or not tx.vin:
            continue
        outs = [a for a in tx.output_addresses() if is_standard_address(a)]
        if len(outs) != 1 or outs[0] in excluded:
            continue
        inputs = [a for a in tx.input_addresses() if is_standard_address(a)]
        if inputs:
            links.append(ChangeLink(tx.txid, min(inputs), outs[0]))
    return links


def build_clusters(
    view: ChainView,
    use_change: bool = False,
    exclusions: Iterable[str] = (),
) -> ClusterSet:
    """Partition every observed address by co-spending (and optionally change)."""
    ids: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    dsu = DisjointSet()

    def node(address, height):
        i = ids.get(address)
        if i is None:
            i = ids[address] = dsu.add()
            first_seen[address] = height
        return i

    for tx in view.transactions:
        for out in tx.vout:
            if is_standard_address(out.address):
                node(out.address, tx.block_height)
        if len(tx.vin) > 0:
            inputs = [a for a in tx.input_addresses() if is_standard_address(a)]
            if len(inputs) > 1:
                root = node(inputs[0], tx.block_height)
                for a in inputs[1:]:
                    dsu.union(root, node(a, tx.block_height))
    if use_change:
        for link in find_change_links(view, exclusions):
            dsu.union(ids[link.input_address], ids[link.output_address])

    addresses = list(ids)
    groups = [[addresses[i] for i in members] for members in dsu.groups().values()]
    return ClusterSet(groups, first_seen)


def write_clusters_csv(clusters: ClusterSet, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster_id", "size", "member_address"])
        w.writerows(clusters.rows())
