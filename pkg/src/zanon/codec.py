"""Newline-delimited JSON dump format.

One block per line::

    {"height": 0, "hash": "...", "time": 1477641600,
     "txs": [{"txid": "...", "coinbase": true,
              "vin": [{"prev_txid": "...", "prev_index": 0}],
              "vout": [{"address": "t1...", "value_zat": 1000000000}],
              "joinsplits": [{"vpub_old_zat": 0, "vpub_new_zat": 0,
                              "nullifiers": ["<hex>", "<hex>"],
                              "commitments": ["<hex>", "<hex>"]}]}]}

Amounts are integers only; nullifiers and commitments are hex strings.
"""

from __future__ import annotations

import hashlib
import json
from typing import Iterable

from .errors import DataError, ParseError
from .model import Block, JoinSplit, Transaction, TxIn, TxOut


def _int(obj, key, what, minimum=0):
    v = obj.get(key) if isinstance(obj, dict) else None
    if type(v) is not int or v < minimum:
        raise DataError(f"{what}.{key} must be an integer >= {minimum}, got {v!r}")
    return v


def _str(obj, key, what):
    v = obj.get(key) if isinstance(obj, dict) else None
    if not isinstance(v, str) or not v:
        raise DataError(f"{what}.{key} must be a non-empty string, got {v!r}")
    return v


def _list(obj, key, what):
    v = obj.get(key, [])
    if not isinstance(v, list):
        raise DataError(f"{what}.{key} must be a list")
    return v


def _hex_pair(obj, key, what):
    v = obj.get(key)
    if not isinstance(v, list) or len(v) != 2:
        raise DataError(f"{what}.{key} must hold exactly two hex strings")
    try:
        return tuple(bytes.fromhex(x) for x in v)
    except (TypeError, ValueError):
        raise DataError(f"{what}.{key} is not hex") from None


def decode_tx(rec, height, time) -> Transaction:
    if not isinstance(rec, dict):
        raise DataError("transaction record must be an object")
    txid = _str(rec, "txid", "tx")
    coinbase = rec.get("coinbase", False)
    if not isinstance(coinbase, bool):
        raise DataError(f"tx {txid}: coinbase must be a boolean")
    vin = tuple(
        TxIn(_str(i, "prev_txid", "vin"), _int(i, "prev_index", "vin"))
        for i in _list(rec, "vin", "tx")
    )
    vout = tuple(
        TxOut(_str(o, "address", "vout"), _int(o, "value_zat", "vout"), n)
        for n, o in enumerate(_list(rec, "vout", "tx"))
    )
    joinsplits = tuple(
        JoinSplit(
            _int(js, "vpub_old_zat", "joinsplit"),
            _int(js, "vpub_new_zat", "joinsplit"),
            _hex_pair(js, "nullifiers", "joinsplit"),
            _hex_pair(js, "commitments", "joinsplit"),
        )
        for js in _list(rec, "joinsplits", "tx")
    )
    return Transaction(txid, height, time, coinbase, vin, vout, joinsplits)


def decode_block(rec) -> Block:
    if not isinstance(rec, dict):
        raise DataError("block record must be a JSON object")
    height = _int(rec, "height", "block")
    bhash = _str(rec, "hash", "block")
    time = _int(rec, "time", "block")
    txs = tuple(decode_tx(t, height, time) for t in _list(rec, "txs", "block"))
    if not txs:
        raise DataError(f"block {height} has no transactions")
    return Block(height, bhash, time, txs)


def parse_line(line: str, lineno: int) -> Block:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
    try:
        return decode_block(rec)
    except DataError as exc:
        raise ParseError(str(exc), lineno) from None


def encode_tx(tx: Transaction) -> dict:
    return {
        "txid": tx.txid,
        "coinbase": tx.is_coinbase,
        "vin": [{"prev_txid": i.prev_txid, "prev_index": i.prev_index} for i in tx.vin],
        "vout": [{"address": o.address, "value_zat": o.value} for o in tx.vout],
        "joinsplits": [
            {
                "vpub_old_zat": js.vpub_old,
                "vpub_new_zat": js.vpub_new,
                "nullifiers": [n.hex() for n in js.nullifiers],
                "commitments": [c.hex() for c in js.commitments],
            }
            for js in tx.joinsplits
        ],
    }


def encode_block(block: Block) -> dict:
    return {
        "height": block.height,
        "hash": block.hash,
        "time": block.time,
        "txs": [encode_tx(tx) for tx in block.txs],
    }


def dump_line(block: Block) -> str:
    return json.dumps(encode_block(block), separators=(",", ":"))


def _canon(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def chain_digest(blocks: Iterable[Block]) -> str:
    """Canonical sha256 over block headers and txid-sorted transaction records.

    Resolution state is excluded, so the digest identifies the raw ledger no
    matter how it was ingested.
    """
    h = hashlib.sha256()
    records = []
    for block in sorted(blocks, key=lambda b: b.height):
        h.update(_canon([block.height, block.hash, block.time, [tx.txid for tx in block.txs]]))
        h.update(b"\n")
        records.extend((tx.txid, block.height, tx) for tx in block.txs)
    records.sort(key=lambda r: r[0])
    for txid, height, tx in records:
        rec = encode_tx(tx)
        rec["height"] = height
        h.update(_canon(rec))
        h.update(b"\n")
    return h.hexdigest()
