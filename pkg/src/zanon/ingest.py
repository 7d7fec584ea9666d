"""Getting ledger data into a :class:`~zanon.store.Store`.

Two sources are supported: a newline-delimited JSON dump (see
:mod:`zanon.codec`) and a zcashd-compatible JSON-RPC endpoint.
"""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Mapping, Optional

import requests

from .codec import parse_line
from .errors import DataError, ParseError, RetriableError, ZanonError
from .model import (
    NONSTANDARD_PREFIX,
    Block,
    JoinSplit,
    Transaction,
    TxIn,
    TxOut,
    zec_to_zat,
)
from .store import IngestReport, Store

log = logging.getLogger(__name__)


def import_dump(store: Store, path, resolve: bool = True) -> IngestReport:
    """Stream a dump file into ``store``.

    Blocks already stored with the same hash are skipped, so re-importing a
    file is a no-op. The whole import is one transaction: on any error nothing
    is written.
    """
    report = IngestReport()
    with store.writer():
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                block = parse_line(line, lineno)
                try:
                    added = store.add_block(block)
                except DataError as exc:
                    raise ParseError(str(exc), lineno) from None
                if added:
                    report.blocks_ingested += 1
                    report.txs_ingested += len(block.txs)
        if resolve:
            r = store.resolve_inputs()
            report.inputs_resolved = r.inputs_resolved
            report.inputs_unresolvable = r.inputs_unresolvable
    log.info("imported %d blocks / %d txs from %s", report.blocks_ingested, report.txs_ingested, path)
    return report


def resolve_inputs(store: Store) -> IngestReport:
    with store.writer():
        return store.resolve_inputs()


@dataclass
class RpcConfig:
    url: str
    user: Optional[str] = None
    password: Optional[str] = None
    timeout: float = 60.0

    @classmethod
    def from_sources(cls, values: Mapping[str, str] = None, environ: Mapping[str, str] = None):
        """Build from config-file ``values`` overridden by ``ZANON_RPC_*`` env vars."""
        values = dict(values or {})
        environ = os.environ if environ is None else environ
        url = environ.get("ZANON_RPC_URL") or values.get("rpc_url")
        if not url:
            raise ZanonError("no RPC endpoint: set rpc_url or ZANON_RPC_URL")
        user = environ.get("ZANON_RPC_USER") or values.get("rpc_user")
        password = environ.get("ZANON_RPC_PASSWORD") or values.get("rpc_password")
        return cls(url, user, password)


class RpcClient:
    def __init__(self, config: RpcConfig):
        self.config = config
        self.session = requests.Session()
        if config.user is not None:
            self.session.auth = (config.user, config.password or "")
        self._ids = itertools.count()

    def call(self, method, *params):
        payload = {"jsonrpc": "1.0", "id": next(self._ids), "method": method, "params": list(params)}
        resp = self.session.post(self.config.url, json=payload, timeout=self.config.timeout)
        if resp.status_code >= 500 and not resp.content:
            resp.raise_for_status()
        body = resp.json(parse_float=Decimal)
        if body.get("error"):
            raise ZanonError(f"RPC {method} failed: {body['error']}")
        return body["result"]

    def get_block_count(self) -> int:
        return self.call("getblockcount")

    def get_block(self, height: int) -> dict:
        bhash = self.call("getblockhash", height)
        return self.call("getblock", bhash, 2)


def _zat(obj, zat_key, zec_key):
    if zat_key in obj:
        v = obj[zat_key]
        if type(v) is not int or v < 0:
            raise DataError(f"{zat_key} must be a non-negative integer")
        return v
    return zec_to_zat(obj[zec_key])


def rpc_block_to_block(raw: dict) -> tuple[Block, Optional[str], int]:
    """Convert a verbose ``getblock`` result. Returns (block, parent hash, nonstandard outputs)."""
    height, time = raw["height"], raw["time"]
    nonstandard = 0
    txs = []
    for pos, rtx in enumerate(raw["tx"]):
        txid = rtx["txid"]
        vin_raw = rtx.get("vin", [])
        coinbase = bool(vin_raw) and "coinbase" in vin_raw[0]
        vin = () if coinbase else tuple(TxIn(i["txid"], i["vout"]) for i in vin_raw)
        vout = []
        for o in rtx.get("vout", []):
            addresses = o.get("scriptPubKey", {}).get("addresses") or []
            if len(addresses) == 1:
                address = addresses[0]
            else:
                address = f"{NONSTANDARD_PREFIX}{txid}:{o['n']}"
                nonstandard += 1
            vout.append(TxOut(address, _zat(o, "valueZat", "value"), o["n"]))
        joinsplits = tuple(
            JoinSplit(
                _zat(js, "vpub_oldZat", "vpub_old"),
                _zat(js, "vpub_newZat", "vpub_new"),
                tuple(bytes.fromhex(n) for n in js["nullifiers"]),
                tuple(bytes.fromhex(c) for c in js["commitments"]),
            )
            for js in rtx.get("vjoinsplit", [])
        )
        txs.append(Transaction(txid, height, time, coinbase, vin, tuple(vout), joinsplits))
    return Block(height, raw["hash"], time, tuple(txs)), raw.get("previousblockhash"), nonstandard


def sync_from_node(
    store: Store,
    client: RpcClient,
    from_height: int = 0,
    to_height: Optional[int] = None,
    workers: int = 4,
    batch: int = 64,
) -> IngestReport:
    """Fetch ``[from_height, to_height]`` from a node and commit in height order.

    Fetching runs on ``workers`` threads; commits are ordered and batched. A
    network failure raises :class:`RetriableError` carrying the first height
    not yet committed.
    """
    report = IngestReport()
    try:
        if to_height is None:
            to_height = client.get_block_count()
    except requests.RequestException as exc:
        raise RetriableError(f"cannot reach node: {exc}", from_height) from exc
    if from_height > to_height:
        return report
    heights = range(from_height, to_height + 1)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for start in range(0, len(heights), batch):
            chunk = heights[start:start + batch]
            try:
                raws = list(pool.map(client.get_block, chunk))
            except requests.RequestException as exc:
                raise RetriableError(f"fetch failed: {exc}", chunk[0]) from exc
            with store.writer():
                for raw in raws:
                    block, parent, nonstandard = rpc_block_to_block(raw)
                    if store.add_block(block, prev_hash=parent):
                        report.blocks_ingested += 1
                        report.txs_ingested += len(block.txs)
                        report.outputs_unaddressed += nonstandard
    with store.writer():
        r = store.resolve_inputs()
    report.inputs_resolved = r.inputs_resolved
    report.inputs_unresolvable = r.inputs_unresolvable
    return report


def write_dump(blocks, path) -> Path:
    from .codec import dump_line

    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for block in blocks:
            fh.write(dump_line(block))
            fh.write("\n")
    return path
