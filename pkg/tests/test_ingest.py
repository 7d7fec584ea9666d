import base64
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from chainkit import ChainKit, addr
from zanon.chain import ChainView
from zanon.codec import dump_line, encode_block, parse_line
from zanon.errors import DataError, IntegrityError, ParseError, ReorgError, RetriableError, ZanonError
from zanon.ingest import RpcClient, RpcConfig, import_dump, resolve_inputs, sync_from_node, write_dump
from zanon.model import NONSTANDARD_PREFIX, format_zec
from zanon.store import Store


@pytest.fixture
def tiny_chain():
    k = ChainKit()
    cb = k.new_block()
    t = k.tx([(cb, 0)], [(addr("a"), "10"), (addr("b"), "2.4999")])
    k.new_block()
    k.tx([(t, 0)], [], vpub_old="9.9999")
    k.tx([], [(addr("c"), "5")], vpub_new="5.0001")
    k.new_block()
    return k.finish()


def test_codec_round_trip(small_scenario):
    for block in small_scenario.blocks[:50]:
        assert parse_line(dump_line(block), 1) == block


@pytest.mark.parametrize("line, fragment", [
    ("{not json", "invalid JSON"),
    ('{"height": 0, "hash": "h", "time": 1, "txs": []}', "no transactions"),
    ('{"height": -1, "hash": "h", "time": 1, "txs": []}', "height"),
    ('{"height": 0, "hash": "h", "time": 1, "txs": [{"txid": "x", "coinbase": true, "vout": '
     '[{"address": "t1a", "value_zat": 1.5}]}]}', "value_zat"),
])
def test_parse_errors_carry_line(line, fragment):
    with pytest.raises(ParseError) as exc:
        parse_line(line, 7)
    assert exc.value.line == 7
    assert fragment in str(exc.value)


def test_import_resolve_and_snapshot(tmp_path, small_scenario, small_view):
    dump = write_dump(small_scenario.blocks, tmp_path / "chain.ndjson")
    with Store(tmp_path / "st") as store:
        r = import_dump(store, dump)
        assert r.blocks_ingested == len(small_scenario.blocks)
        assert r.inputs_unresolvable == 0
        snap = store.snapshot()
        assert snap.digest() == small_view.digest() == small_scenario.manifest["digest"]
        assert snap.transactions == small_view.transactions
        again = import_dump(store, dump)
        assert again.blocks_ingested == 0
        assert store.counts() == (len(small_view.blocks), len(small_view))
        partial = store.snapshot(tip=10)
        assert partial.tip_height == 10


def test_store_index_lookups_match_view(tmp_path, small_scenario, small_view):
    dump = write_dump(small_scenario.blocks, tmp_path / "chain.ndjson")
    with Store(tmp_path / "st") as store:
        import_dump(store, dump)
        some = sorted(small_view.addresses)[:20]
        for a in some:
            assert store.txids_with_output(a) == sorted(small_view.txids_with_output(a))
            assert store.txids_with_input(a) == sorted(small_view.txids_with_input(a))
        for v, ids in list(small_view.deposit_values().items())[:20]:
            assert store.deposits_of_value(v) == ids


def test_import_is_atomic(tmp_path, tiny_chain):
    path = tmp_path / "bad.ndjson"
    lines = [dump_line(b) for b in tiny_chain]
    lines.insert(2, "{broken")
    path.write_text("\n".join(lines) + "\n")
    with Store(tmp_path / "st") as store:
        with pytest.raises(ParseError) as exc:
            import_dump(store, path)
        assert exc.value.line == 3
        assert store.tip_height() == -1


def test_conflicting_block_is_a_reorg(tmp_path, tiny_chain):
    path = write_dump(tiny_chain, tmp_path / "a.ndjson")
    rec = encode_block(tiny_chain[1])
    rec["hash"] = "ff" * 32
    with Store(tmp_path / "st") as store:
        import_dump(store, path)
        other = tmp_path / "b.ndjson"
        other.write_text(json.dumps(rec) + "\n")
        with pytest.raises(ParseError, match="differs"):
            import_dump(store, other)


def test_store_rejects_gaps_and_reorgs(tmp_path, tiny_chain):
    with Store(tmp_path / "st") as store:
        with store.writer():
            store.add_block(tiny_chain[0])
            with pytest.raises(DataError):
                store.add_block(tiny_chain[2])
            with pytest.raises(ReorgError):
                store.add_block(tiny_chain[1], prev_hash="00" * 32)


def test_double_spend_detected(tmp_path):
    k = ChainKit()
    cb = k.new_block()
    k.tx([(cb, 0)], [(addr("a"), "1")])
    k.tx([(cb, 0)], [(addr("b"), "1")])
    path = write_dump(k.finish(), tmp_path / "ds.ndjson")
    with Store(tmp_path / "st") as store:
        with pytest.raises(IntegrityError):
            import_dump(store, path)
    with pytest.raises(IntegrityError):
        ChainView.from_blocks(k.blocks)


def test_dangling_inputs_reported(tmp_path, tiny_chain):
    path = write_dump(tiny_chain[2:3], tmp_path / "part.ndjson")
    rec = json.loads(path.read_text())
    rec["height"] = 0
    path.write_text(json.dumps(rec) + "\n")
    with Store(tmp_path / "st") as store:
        r = import_dump(store, path)
        assert r.inputs_unresolvable == 1
        assert len(store.dangling_inputs()) == 1
        assert resolve_inputs(store).inputs_unresolvable == 1


def test_second_writer_is_refused(tmp_path):
    with Store(tmp_path / "st") as a, Store(tmp_path / "st") as b:
        with a.writer():
            with pytest.raises(ZanonError, match="locked"):
                with b.writer():
                    pass


# -- JSON-RPC node double ----------------------------------------------


def rpc_block(block, prev_hash, nonstandard_at=None, decimal_values=False):
    txs = []
    for tx in block.txs:
        vin = [{"coinbase": "00"}] if tx.is_coinbase else [{"txid": i.prev_txid, "vout": i.prev_index} for i in tx.vin]
        vout = []
        for o in tx.vout:
            script = {"addresses": [o.address]}
            if (tx.txid, o.index) == nonstandard_at:
                script = {"type": "nulldata"}
            entry = {"n": o.index, "scriptPubKey": script}
            if decimal_values:
                entry["value"] = format_zec(o.value)
            else:
                entry["valueZat"] = o.value
            vout.append(entry)
        js = [{"vpub_oldZat": j.vpub_old, "vpub_newZat": j.vpub_new,
               "nullifiers": [n.hex() for n in j.nullifiers], "commitments": [c.hex() for c in j.commitments]}
              for j in tx.joinsplits]
        txs.append({"txid": tx.txid, "vin": vin, "vout": vout, "vjoinsplit": js})
    raw = {"height": block.height, "hash": block.hash, "time": block.time, "tx": txs}
    if prev_hash:
        raw["previousblockhash"] = prev_hash
    return raw


class FakeNode:
    def __init__(self, blocks, **kw):
        self.blocks = {b.hash: rpc_block(b, blocks[b.height - 1].hash if b.height else None, **kw) for b in blocks}
        self.hashes = [b.hash for b in blocks]
        self.auth_seen = set()
        node = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                node.auth_seen.add(self.headers.get("Authorization"))
                req = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                method, params = req["method"], req["params"]
                if method == "getblockcount":
                    result = len(node.hashes) - 1
                elif method == "getblockhash":
                    result = node.hashes[params[0]]
                elif method == "getblock":
                    result = node.blocks[params[0]]
                else:
                    result = None
                body = json.dumps({"result": result, "error": None, "id": req["id"]}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, *args):
                pass

        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_port}/"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()


def test_sync_from_node_matches_dump(tmp_path, small_scenario, small_view):
    blocks = small_scenario.blocks[:120]
    with FakeNode(blocks) as node, Store(tmp_path / "st") as store:
        client = RpcClient(RpcConfig(node.url, "alice", "pw"))
        r = sync_from_node(store, client, workers=3, batch=16)
        assert r.blocks_ingested == 120
        assert store.snapshot().digest() == ChainView.from_blocks(blocks).digest()
        token = base64.b64encode(b"alice:pw").decode()
        assert node.auth_seen == {f"Basic {token}"}
        assert sync_from_node(store, client, from_height=store.tip_height() + 1).blocks_ingested == 0


def test_sync_nonstandard_and_decimal_values(tmp_path):
    k = ChainKit()
    cb = k.new_block()
    t = k.tx([(cb, 0)], [(addr("a"), "10"), (addr("b"), "2.4999")])
    k.new_block()
    blocks = k.finish()
    with FakeNode(blocks, nonstandard_at=(t, 1), decimal_values=True) as node, Store(tmp_path / "st") as store:
        r = sync_from_node(store, RpcClient(RpcConfig(node.url)))
        assert r.outputs_unaddressed == 1
        view = store.snapshot()
        out = view.tx(t).vout[1]
        assert out.address.startswith(NONSTANDARD_PREFIX) and out.value == 249_990_000


def test_unreachable_node_is_retriable(tmp_path):
    with Store(tmp_path / "st") as store:
        client = RpcClient(RpcConfig("http://127.0.0.1:9/", timeout=2))
        with pytest.raises(RetriableError) as exc:
            sync_from_node(store, client, from_height=5)
        assert exc.value.resume_height == 5


def test_rpc_config_sources():
    cfg = RpcConfig.from_sources({"rpc_url": "http://file", "rpc_user": "u"}, {"ZANON_RPC_URL": "http://env"})
    assert (cfg.url, cfg.user, cfg.password) == ("http://env", "u", None)
    with pytest.raises(ZanonError):
        RpcConfig.from_sources({}, {})
