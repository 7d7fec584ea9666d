"""Immutable, indexed in-memory view over a block range.

Every analysis module reads the ledger through :class:`ChainView`. A view is
built either directly from blocks (tests, the generator) or from an on-disk
store snapshot (:meth:`zanon.store.Store.snapshot`).
"""

from __future__ import annotations

import dataclasses
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from functools import cached_property
from typing import Iterable, Iterator, Sequence

from .codec import chain_digest
from .errors import DataError, IntegrityError, NotFound
from .model import Block, Transaction, TxIn, pool_deposit, pool_withdrawal


@dataclass
class ResolveReport:
    inputs_resolved: int = 0
    inputs_unresolvable: int = 0
    dangling: list = dataclasses.field(default_factory=list)


def resolve_blocks(blocks: Sequence[Block]) -> tuple[list[Block], ResolveReport]:
    """Attach address and value of the spent output to every input.

    Raises :class:`IntegrityError` if an output is spent twice. Inputs whose
    previous output is unknown are left unresolved and reported.
    """
    outputs = {}
    for block in blocks:
        for tx in block.txs:
            for out in tx.vout:
                outputs[(tx.txid, out.index)] = out
    spent = {}
    report = ResolveReport()
    resolved_blocks = []
    for block in blocks:
        new_txs = []
        for tx in block.txs:
            new_vin = []
            for txin in tx.vin:
                op = txin.outpoint
                if op in spent:
                    raise IntegrityError(
                        f"output {op[0]}:{op[1]} spent by both {spent[op]} and {tx.txid}"
                    )
                spent[op] = tx.txid
                out = outputs.get(op)
                if out is None:
                    report.inputs_unresolvable += 1
                    report.dangling.append((tx.txid, op))
                    new_vin.append(TxIn(txin.prev_txid, txin.prev_index))
                else:
                    report.inputs_resolved += 1
                    new_vin.append(TxIn(txin.prev_txid, txin.prev_index, out.address, out.value))
            new_txs.append(dataclasses.replace(tx, vin=tuple(new_vin)) if tx.vin else tx)
        resolved_blocks.append(dataclasses.replace(block, txs=tuple(new_txs)))
    return resolved_blocks, report


def utc_day(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%d")


def utc_month(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m")


class ChainView:
    """Read-only chain with lookup indices.

    Indices are built lazily on first use and cached; the view itself never
    changes after construction, so it is safe to share between threads.
    """

    def __init__(self, blocks: Iterable[Block]):
        self.blocks: tuple[Block, ...] = tuple(sorted(blocks, key=lambda b: b.height))
        for expected, block in enumerate(self.blocks):
            if block.height != expected:
                raise DataError(f"block heights are not contiguous from 0 (missing {expected})")

    @classmethod
    def from_blocks(cls, blocks: Iterable[Block], resolve: bool = True) -> "ChainView":
        blocks = list(blocks)
        if resolve:
            blocks, _ = resolve_blocks(blocks)
        return cls(blocks)

    def __len__(self):
        return len(self.transactions)

    @property
    def is_empty(self) -> bool:
        return not self.blocks

    @property
    def tip_height(self) -> int:
        return self.blocks[-1].height if self.blocks else -1

    @cached_property
    def transactions(self) -> tuple[Transaction, ...]:
        return tuple(tx for block in self.blocks for tx in block.txs)

    def iter_transactions(self, start: int = 0, stop: int | None = None) -> Iterator[Transaction]:
        """Transactions of heights in ``[start, stop]`` in chain order."""
        stop = self.tip_height if stop is None else min(stop, self.tip_height)
        for h in range(max(start, 0), stop + 1):
            yield from self.blocks[h].txs

    def block(self, height: int) -> Block:
        if not 0 <= height <= self.tip_height:
            raise NotFound(f"no block at height {height}")
        return self.blocks[height]

    @cached_property
    def _by_txid(self) -> dict[str, int]:
        index = {}
        for pos, tx in enumerate(self.transactions):
            if tx.txid in index:
                raise IntegrityError(f"duplicate txid {tx.txid}")
            index[tx.txid] = pos
        return index

    def tx(self, txid: str) -> Transaction:
        try:
            return self.transactions[self._by_txid[txid]]
        except KeyError:
            raise NotFound(f"unknown txid {txid}") from None

    def position(self, txid: str) -> int:
        """Global chain-order index of a transaction."""
        return self._by_txid[txid]

    @cached_property
    def _address_index(self):
        as_input = defaultdict(list)
        as_output = defaultdict(list)
        for tx in self.transactions:
            seen = set()
            for txin in tx.vin:
                a = txin.resolved_address
                if a is not None and a not in seen:
                    seen.add(a)
                    as_input[a].append(tx.txid)
            seen = set()
            for out in tx.vout:
                if out.address not in seen:
                    seen.add(out.address)
                    as_output[out.address].append(tx.txid)
        return dict(as_input), dict(as_output)

    def txids_with_input(self, address: str) -> list[str]:
        return self._address_index[0].get(address, [])

    def txids_with_output(self, address: str) -> list[str]:
        return self._address_index[1].get(address, [])

    @cached_property
    def addresses(self) -> frozenset[str]:
        """Every transparent address seen in an output."""
        return frozenset(self._address_index[1])

    @cached_property
    def _value_index(self):
        deposits = defaultdict(list)
        withdrawals = defaultdict(list)
        for tx in self.transactions:
            d = pool_deposit(tx)
            if d:
                deposits[d].append(tx.txid)
            w = pool_withdrawal(tx)
            if w:
                withdrawals[w].append(tx.txid)
        return dict(deposits), dict(withdrawals)

    def deposits_of_value(self, value: int) -> list[str]:
        return self._value_index[0].get(value, [])

    def withdrawals_of_value(self, value: int) -> list[str]:
        return self._value_index[1].get(value, [])

    def deposit_values(self) -> dict[int, list[str]]:
        return self._value_index[0]

    def withdrawal_values(self) -> dict[int, list[str]]:
        return self._value_index[1]

    def digest(self) -> str:
        return chain_digest(self.blocks)
