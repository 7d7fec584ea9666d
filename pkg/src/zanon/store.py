"""On-disk ledger store backed by SQLite.

Layout (one directory per store)::

    <store>/ledger.sqlite   blocks, txs, vin, vout, joinsplits, nullifiers, tags
    <store>/store.lock      held by the single writer

Indices cover txid, address (as input and as output), height and pool value
(deposit and withdrawal), all B-tree backed.
"""

from __future__ import annotations

import logging
import sqlite3
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from filelock import FileLock, Timeout

from .chain import ChainView
from .errors import DataError, IntegrityError, ReorgError, ZanonError
from .model import Block, JoinSplit, Transaction, TxIn, TxOut, pool_deposit, pool_withdrawal

log = logging.getLogger(__name__)

SCHEMA = """
CREATE TABLE IF NOT EXISTS blocks (
    height INTEGER PRIMARY KEY,
    hash TEXT NOT NULL,
    time INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS txs (
    txid TEXT PRIMARY KEY,
    height INTEGER NOT NULL,
    pos INTEGER NOT NULL,
    coinbase INTEGER NOT NULL,
    deposit INTEGER NOT NULL,
    withdrawal INTEGER NOT NULL
);
CREATE INDEX IF NOT EXISTS txs_height ON txs(height, pos);
CREATE INDEX IF NOT EXISTS txs_deposit ON txs(deposit) WHERE deposit > 0;
CREATE INDEX IF NOT EXISTS txs_withdrawal ON txs(withdrawal) WHERE withdrawal > 0;
CREATE TABLE IF NOT EXISTS vin (
    txid TEXT NOT NULL,
    n INTEGER NOT NULL,
    prev_txid TEXT NOT NULL,
    prev_index INTEGER NOT NULL,
    address TEXT,
    value INTEGER,
    PRIMARY KEY (txid, n)
);
CREATE INDEX IF NOT EXISTS vin_prevout ON vin(prev_txid, prev_index);
CREATE INDEX IF NOT EXISTS vin_address ON vin(address);
CREATE TABLE IF NOT EXISTS vout (
    txid TEXT NOT NULL,
    n INTEGER NOT NULL,
    address TEXT NOT NULL,
    value INTEGER NOT NULL,
    PRIMARY KEY (txid, n)
);
CREATE INDEX IF NOT EXISTS vout_address ON vout(address);
CREATE TABLE IF NOT EXISTS joinsplits (
    txid TEXT NOT NULL,
    n INTEGER NOT NULL,
    vpub_old INTEGER NOT NULL,
    vpub_new INTEGER NOT NULL,
    nf0 BLOB NOT NULL, nf1 BLOB NOT NULL,
    cm0 BLOB NOT NULL, cm1 BLOB NOT NULL,
    PRIMARY KEY (txid, n)
);
CREATE TABLE IF NOT EXISTS nullifiers (
    nf BLOB PRIMARY KEY,
    txid TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS tags (
    address TEXT NOT NULL,
    category TEXT NOT NULL,
    name TEXT NOT NULL,
    source TEXT NOT NULL,
    run_id TEXT NOT NULL,
    PRIMARY KEY (address, category, name, source)
);
"""


@dataclass
class IngestReport:
    blocks_ingested: int = 0
    txs_ingested: int = 0
    inputs_resolved: int = 0
    inputs_unresolvable: int = 0
    outputs_unaddressed: int = 0


class Store:
    def __init__(self, path, create: bool = True):
        self.path = Path(path)
        if not self.path.exists():
            if not create:
                raise DataError(f"no store at {self.path}")
            self.path.mkdir(parents=True)
        self.db_path = self.path / "ledger.sqlite"
        self._lock = FileLock(str(self.path / "store.lock"))
        self.conn = sqlite3.connect(self.db_path, isolation_level=None)
        self.conn.execute("PRAGMA journal_mode=WAL")
        self.conn.execute("PRAGMA synchronous=NORMAL")
        self.conn.executescript(SCHEMA)

    def close(self):
        self.conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @contextmanager
    def writer(self):
        """Hold the store lock and an open transaction; roll back on error."""
        try:
            self._lock.acquire(timeout=0)
        except Timeout:
            raise ZanonError(f"store {self.path} is locked by another writer") from None
        try:
            self.conn.execute("BEGIN")
            try:
                yield
            except BaseException:
                self.conn.execute("ROLLBACK")
                raise
            self.conn.execute("COMMIT")
        finally:
            self._lock.release()

    def tip_height(self) -> int:
        row = self.conn.execute("SELECT MAX(height) FROM blocks").fetchone()
        return -1 if row[0] is None else row[0]

    def block_hash(self, height: int) -> Optional[str]:
        row = self.conn.execute("SELECT hash FROM blocks WHERE height = ?", (height,)).fetchone()
        return row[0] if row else None

    def add_block(self, block: Block, prev_hash: Optional[str] = None) -> bool:
        """Insert one block inside an open :meth:`writer` transaction.

        Returns False (and writes nothing) when the identical block is already
        stored. ``prev_hash``, when known, is checked against the stored parent.
        """
        stored = self.block_hash(block.height)
        if stored is not None:
            if stored != block.hash:
                raise ReorgError(
                    f"height {block.height}: stored hash {stored} differs from {block.hash}"
                )
            return False
        tip = self.tip_height()
        if block.height != tip + 1:
            raise DataError(f"block {block.height} does not extend tip {tip}")
        if prev_hash is not None and block.height > 0:
            parent = self.block_hash(block.height - 1)
            if parent != prev_hash:
                raise ReorgError(
                    f"block {block.height} builds on {prev_hash}, stored parent is {parent}"
                )
        c = self.conn
        c.execute("INSERT INTO blocks VALUES (?, ?, ?)", (block.height, block.hash, block.time))
        tx_rows, vin_rows, vout_rows, js_rows, nf_rows = [], [], [], [], []
        for pos, tx in enumerate(block.txs):
            tx_rows.append(
                (tx.txid, block.height, pos, int(tx.is_coinbase), pool_deposit(tx), pool_withdrawal(tx))
            )
            for n, i in enumerate(tx.vin):
                vin_rows.append((tx.txid, n, i.prev_txid, i.prev_index))
            for o in tx.vout:
                vout_rows.append((tx.txid, o.index, o.address, o.value))
            for n, js in enumerate(tx.joinsplits):
                js_rows.append((tx.txid, n, js.vpub_old, js.vpub_new, *js.nullifiers, *js.commitments))
                nf_rows.extend((nf, tx.txid) for nf in js.nullifiers)
        txids = [r[0] for r in tx_rows]
        dup = self._duplicate_txid(txids)
        if dup:
            raise DataError(f"duplicate txid {dup} in block {block.height}")
        c.executemany("INSERT INTO txs VALUES (?, ?, ?, ?, ?, ?)", tx_rows)
        try:
            c.executemany("INSERT INTO nullifiers VALUES (?, ?)", nf_rows)
        except sqlite3.IntegrityError:
            raise IntegrityError(f"block {block.height} reveals a nullifier already seen") from None
        c.executemany("INSERT INTO vin (txid, n, prev_txid, prev_index) VALUES (?, ?, ?, ?)", vin_rows)
        c.executemany("INSERT INTO vout VALUES (?, ?, ?, ?)", vout_rows)
        c.executemany("INSERT INTO joinsplits VALUES (?, ?, ?, ?, ?, ?, ?, ?)", js_rows)
        return True

    def _duplicate_txid(self, txids: list[str]) -> Optional[str]:
        seen = set()
        for txid in txids:
            if txid in seen:
                return txid
            seen.add(txid)
        for txid in txids:
            if self.conn.execute("SELECT 1 FROM txs WHERE txid = ?", (txid,)).fetchone():
                return txid
        return None

    def resolve_inputs(self) -> IngestReport:
        """Fill resolved address/value on every input from the spent output."""
        c = self.conn
        row = c.execute(
            "SELECT prev_txid, prev_index, COUNT(*) FROM vin "
            "GROUP BY prev_txid, prev_index HAVING COUNT(*) > 1 LIMIT 1"
        ).fetchone()
        if row:
            raise IntegrityError(f"output {row[0]}:{row[1]} is spent {row[2]} times")
        c.execute(
            "UPDATE vin SET address = o.address, value = o.value FROM vout AS o "
            "WHERE vin.address IS NULL AND o.txid = vin.prev_txid AND o.n = vin.prev_index"
        )
        resolved = c.execute("SELECT COUNT(*) FROM vin WHERE address IS NOT NULL").fetchone()[0]
        dangling = c.execute("SELECT COUNT(*) FROM vin WHERE address IS NULL").fetchone()[0]
        return IngestReport(inputs_resolved=resolved, inputs_unresolvable=dangling)

    def dangling_inputs(self) -> list[tuple[str, str, int]]:
        return self.conn.execute(
            "SELECT txid, prev_txid, prev_index FROM vin WHERE address IS NULL ORDER BY txid, n"
        ).fetchall()

    def counts(self) -> tuple[int, int]:
        blocks = self.conn.execute("SELECT COUNT(*) FROM blocks").fetchone()[0]
        txs = self.conn.execute("SELECT COUNT(*) FROM txs").fetchone()[0]
        return blocks, txs

    # index lookups straight from disk; analyses normally use a snapshot

    def txids_with_input(self, address: str) -> list[str]:
        return [r[0] for r in self.conn.execute(
            "SELECT DISTINCT txid FROM vin WHERE address = ? ORDER BY txid", (address,))]

    def txids_with_output(self, address: str) -> list[str]:
        return [r[0] for r in self.conn.execute(
            "SELECT DISTINCT txid FROM vout WHERE address = ? ORDER BY txid", (address,))]

    def deposits_of_value(self, value: int) -> list[str]:
        return [r[0] for r in self.conn.execute(
            "SELECT txid FROM txs WHERE deposit = ? AND deposit > 0 ORDER BY height, pos", (value,))]

    def withdrawals_of_value(self, value: int) -> list[str]:
        return [r[0] for r in self.conn.execute(
            "SELECT txid FROM txs WHERE withdrawal = ? AND withdrawal > 0 ORDER BY height, pos", (value,))]

    def snapshot(self, tip: Optional[int] = None) -> ChainView:
        """Materialise blocks ``0..tip`` as an immutable :class:`ChainView`."""
        tip = self.tip_height() if tip is None else min(tip, self.tip_height())
        c = self.conn
        vins = defaultdict(list)
        for txid, prev_txid, prev_index, address, value in c.execute(
            "SELECT vin.txid, prev_txid, prev_index, address, value FROM vin "
            "JOIN txs USING (txid) WHERE txs.height <= ? ORDER BY vin.txid, vin.n", (tip,)
        ):
            vins[txid].append(TxIn(prev_txid, prev_index, address, value))
        vouts = defaultdict(list)
        for txid, n, address, value in c.execute(
            "SELECT vout.txid, n, address, value FROM vout "
            "JOIN txs USING (txid) WHERE txs.height <= ? ORDER BY vout.txid, vout.n", (tip,)
        ):
            vouts[txid].append(TxOut(address, value, n))
        jss = defaultdict(list)
        for txid, old, new, nf0, nf1, cm0, cm1 in c.execute(
            "SELECT joinsplits.txid, vpub_old, vpub_new, nf0, nf1, cm0, cm1 FROM joinsplits "
            "JOIN txs USING (txid) WHERE txs.height <= ? ORDER BY joinsplits.txid, joinsplits.n",
            (tip,),
        ):
            jss[txid].append(JoinSplit(old, new, (bytes(nf0), bytes(nf1)), (bytes(cm0), bytes(cm1))))
        times = dict(c.execute("SELECT height, time FROM blocks WHERE height <= ?", (tip,)))
        txs_by_height = defaultdict(list)
        for txid, height, coinbase in c.execute(
            "SELECT txid, height, coinbase FROM txs WHERE height <= ? ORDER BY height, pos", (tip,)
        ):
            txs_by_height[height].append(
                Transaction(
                    txid, height, times[height], bool(coinbase),
                    tuple(vins.get(txid, ())), tuple(vouts.get(txid, ())), tuple(jss.get(txid, ())),
                )
            )
        blocks = [
            Block(height, bhash, time, tuple(txs_by_height[height]))
            for height, bhash, time in c.execute(
                "SELECT height, hash, time FROM blocks WHERE height <= ? ORDER BY height", (tip,)
            )
        ]
        return ChainView(blocks)

    def digest(self) -> str:
        return self.snapshot().digest()

    def save_tags(self, rows: Iterable[tuple[str, str, str, str, str]]) -> int:
        before = self.conn.total_changes
        self.conn.executemany("INSERT OR IGNORE INTO tags VALUES (?, ?, ?, ?, ?)", rows)
        return self.conn.total_changes - before

    def load_tag_rows(self) -> list[tuple[str, str, str, str, str]]:
        return self.conn.execute(
            "SELECT address, category, name, source, run_id FROM tags "
            "ORDER BY address, category, name, source"
        ).fetchall()
