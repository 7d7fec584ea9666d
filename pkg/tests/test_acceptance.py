"""Acceptance criteria.

AC1-AC8 run on generated chains. AC9-AC13 need a store holding a full mainnet
export through block 258,471 (already tagged with ``zanon tag``); point
ZANON_MAINNET_STORE at it to run them.
"""

import json
import os
import random
import time
from fractions import Fraction

import pytest

from chainkit import ChainKit, addr, scenario_registry, zat
from conftest import ACCEPTANCE_LINES
from zanon.attribute import Actor, apply_founder_withdrawal_heuristic, apply_miner_withdrawal_heuristic, run_pipeline
from zanon.chain import ChainView
from zanon.errors import ConservationError
from zanon.cli import main
from zanon.cluster import build_clusters
from zanon.ingest import import_dump
from zanon.link import anonymity_reduction, find_round_trips, linked_value_curve
from zanon.model import TxKind, conservation_check
from zanon.stats import kind_breakdown, pool_series
from zanon.store import Store
from zanon.synth import ScenarioConfig, build, confusion, generate
from zanon.tags import Category, Source, Tag, TagRegistry, derive_miner_tags
from zanon.tsb import PriceSchedule, scan

from test_cluster import bfs_components
from test_link import as_tuples, brute_force

# Pinned tolerances.
AC1_RUNTIME_S = 60
AC1_SEED = 7
AC2_SCENARIOS = 100
AC2_MAX_ADDRESSES = 10_000
AC5_SCENARIOS = 50
AC5_GAPS = (1, 10, 100)
AC8_TOLS_ZEC = (5, 4, 3, 2, 1)
AC11_TOL = zat(1)
AC12_PP = 0.2
AC12_ANON_PP = 0.3
AC13_VALUE_TOL = 1  # zat, i.e. 1e-8 ZEC


def record(n, ok, detail):
    ACCEPTANCE_LINES.append(f"AC{n} {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def random_scenarios():
    """Generated chains with randomized parameters, reused by AC2, AC5 and AC6."""
    out = []
    for i in range(AC2_SCENARIOS):
        rng = random.Random(i)
        cfg = ScenarioConfig(
            seed=1000 + i,
            block_count=rng.randint(80, 300),
            users=rng.randint(20, 300),
            pools=rng.randint(1, 4),
            solo_miners=rng.randint(0, 6),
            exchange_member_rate=rng.random() * 0.5,
            round_trip_rate=rng.choice([0.05, 0.2, 0.4]),
            round_trip_gap_max=rng.randint(1, 100),
        )
        sc = build(cfg)
        out.append((sc, ChainView.from_blocks(sc.blocks)))
    return out


def test_ac1_end_to_end_ground_truth(tmp_path):
    start = time.perf_counter()
    cfg = ScenarioConfig(seed=AC1_SEED)
    paths = generate(cfg, tmp_path / "sc")
    sc_manifest = json.loads(paths["manifest"].read_text())
    with Store(tmp_path / "st") as store:
        import_dump(store, paths["chain"])
        view = store.snapshot()
    reg = TagRegistry()
    reg.load_founder_params(paths["founders"])
    reg.import_tags_csv(paths["tags"])
    derive_miner_tags(view, reg)
    kb = kind_breakdown(view)
    ps = pool_series(view)
    res = run_pipeline(view, reg)
    trips = find_round_trips(view, cfg.round_trip_gap_max)
    elapsed = time.perf_counter() - start

    checks = {
        "kind_breakdown": {k.value: kb.counts[k] for k in TxKind} == sc_manifest["kind_counts"],
        "pool_series": [[p.height, p.deposited, p.withdrawn, p.balance] for p in ps.points]
        == sc_manifest["pool_ledger"],
        "attribution": {t: c.value for t, c in res.categories.items()} == sc_manifest["tx_categories"],
        "round_trips": [list(t) for t in as_tuples(trips)] == sc_manifest["round_trips"],
        "runtime": elapsed < AC1_RUNTIME_S,
    }
    failed = [k for k, ok in checks.items() if not ok]
    record(1, not failed,
           f"5000 blocks seed {AC1_SEED}: {len(view)} txs, {len(res.categories)} categories, "
           f"{len(trips)} round trips, exact match (tol 0); {elapsed:.1f}s < {AC1_RUNTIME_S}s"
           + (f"; mismatched: {failed}" if failed else ""))


def test_ac2_clustering_equals_bfs(random_scenarios):
    bad = []
    largest = 0
    for sc, view in random_scenarios:
        largest = max(largest, len(view.addresses))
        assert len(view.addresses) <= AC2_MAX_ADDRESSES
        if build_clusters(view).partition() != bfs_components(view):
            bad.append(sc.config.seed)
    record(2, not bad, f"{len(random_scenarios)} randomized scenarios, up to {largest} addresses: "
           f"H1 partition == BFS components" + (f"; differs for seeds {bad}" if bad else ""))


def test_ac3_h3_boundary():
    k = ChainKit()
    cb = k.new_block(coinbase_to=[(addr("w"), "2000")])
    k.tx([(cb, 0)], [], vpub_old="2000")
    k.new_block()
    hits = {}
    for value in ("250.0001", "249.9999", "250.00010001"):
        hits[value] = k.tx([], [(addr(value), zat(value) - zat("0.0001"))], vpub_new=value)
    r = apply_founder_withdrawal_heuristic(k.view(), TagRegistry())
    boundary_ok = r.txs == [hits["250.0001"]]

    sc = build(ScenarioConfig(seed=2, block_count=1500))
    clean = confusion(apply_founder_withdrawal_heuristic(ChainView.from_blocks(sc.blocks), TagRegistry()).txs,
                      sc.manifest["founder_withdrawal_txids"])
    clean_ok = clean.precision == 1 and clean.recall == 1

    sc = build(ScenarioConfig(seed=2, block_count=1500, h3_decoys=2))
    m = sc.manifest
    noisy = confusion(apply_founder_withdrawal_heuristic(ChainView.from_blocks(sc.blocks), TagRegistry()).txs,
                      m["founder_withdrawal_txids"])
    n_true, n_decoy = len(m["founder_withdrawal_txids"]), len(m["h3_decoys"])
    noisy_ok = n_decoy > 0 and noisy.precision == Fraction(n_true, n_true + n_decoy) and noisy.recall == 1
    record(3, boundary_ok and clean_ok and noisy_ok,
           f"250.0001 tagged, 249.9999/250.00010001 not; clean P=R=1 ({clean.tp} txs); "
           f"with {n_decoy} decoys P={noisy.tp}/{noisy.tp + noisy.fp} == {n_true}/{n_true + n_decoy}")


def test_ac4_h4_boundary():
    pool = addr("pool")

    def case(n_outputs, with_pool):
        k = ChainKit()
        cb = k.new_block(coinbase_to=[(addr("w"), "100")])
        k.tx([(cb, 0)], [], vpub_old="100")
        k.new_block()
        outs = [(pool, "0.01")] if with_pool else []
        outs += [(addr(f"m{i}"), "0.01") for i in range(n_outputs - len(outs))]
        k.tx([], outs, vpub_new=zat("0.01") * len(outs) + zat("0.0001"))
        reg = TagRegistry()
        reg.add(Tag(pool, Category.POOL, "p", Source.CSV))
        r = apply_miner_withdrawal_heuristic(k.view(), reg)
        return r.addresses_tagged, len(reg.addresses(Category.MINER))

    got = {"101+pool": case(101, True), "100+pool": case(100, True), "150 no pool": case(150, False)}
    ok = got == {"101+pool": (100, 100), "100+pool": (0, 0), "150 no pool": (0, 0)}
    record(4, ok, f"tagged addresses: 101 outputs with pool -> {got['101+pool'][0]}, "
           f"100 outputs -> {got['100+pool'][0]}, no pool address -> {got['150 no pool'][0]}")


def test_ac5_round_trips_equal_brute_force(random_scenarios):
    bad, nonmono, linked = [], [], 0
    for sc, view in random_scenarios[:AC5_SCENARIOS]:
        for gap in AC5_GAPS:
            got = as_tuples(find_round_trips(view, gap))
            if got != brute_force(view, gap):
                bad.append((sc.config.seed, gap))
            if gap == 100:
                linked += len(got)
        curve = linked_value_curve(view, range(1, 101))
        if any(a[1] > b[1] or a[2] > b[2] for a, b in zip(curve, curve[1:])):
            nonmono.append(sc.config.seed)
    record(5, not bad and not nonmono and linked > 0,
           f"{AC5_SCENARIOS} scenarios x gaps {AC5_GAPS}: equal to O(n^2) scan ({linked} links at gap 100); "
           f"curve monotone over gaps 1..100" + (f"; diffs {bad[:5]} nonmonotone {nonmono[:5]}" if bad or nonmono else ""))


def test_ac6_conservation(random_scenarios, view, tsb_scenario):
    chains = [v for _, v in random_scenarios] + [view, ChainView.from_blocks(tsb_scenario.blocks)]
    txs = violations = 0
    low = None
    for v in chains:
        for tx in v.transactions:
            txs += 1
            try:
                conservation_check(tx)
            except ConservationError:
                violations += 1
        m = min(p.balance for p in pool_series(v).points)
        low = m if low is None else min(low, m)
    record(6, violations == 0 and low >= 0,
           f"{len(chains)} chains, {txs} txs: fee >= 0 for all ({violations} violations); "
           f"minimum pool balance {low} zat")


def test_ac7_determinism(tmp_path, capsys):
    bundles = []
    for run in ("a", "b"):
        root = tmp_path / run
        assert main(["synth", "--out", str(root / "sc"), "--seed", "17", "--set", "block_count=1200",
                     "--set", "tsb_buyers=2"]) == 0
        assert main(["import", str(root / "sc" / "chain.ndjson"), "--store", str(root / "st")]) == 0
        assert main(["tag", "--store", str(root / "st"), "--founders", str(root / "sc" / "founders.txt"),
                     "--tags", str(root / "sc" / "tags.csv")]) == 0
        assert main(["report", "--store", str(root / "st"), "--out", str(root / "report"),
                     "--schedule", str(root / "sc" / "schedule.csv")]) == 0
        files = {}
        for sub in ("sc", "report"):
            for p in sorted((root / sub).iterdir()):
                files[f"{sub}/{p.name}"] = p.read_bytes()
        bundles.append(files)
    capsys.readouterr()
    a, b = bundles
    differing = sorted(k for k in a if a[k] != b.get(k)) + sorted(set(b) - set(a))
    record(7, not differing, f"synth+import+tag+report twice: {len(a)} files byte-identical"
           + (f"; differ: {differing}" if differing else ""))


def test_ac8_tsb_anti_monotone(tsb_scenario):
    results = []
    for sc in (tsb_scenario, build(ScenarioConfig(
            seed=31, block_count=3000, block_interval=3000, tsb_buyers=4, tsb_decoys=4,
            exchange_member_rate=0.3, tsb_busy_txs=30))):
        view = ChainView.from_blocks(sc.blocks)
        reg = scenario_registry(sc, view)
        res = run_pipeline(view, reg)
        for t in res.new_tags:
            reg.add(t)
        clusters = build_clusters(view, use_change=True)
        schedule = PriceSchedule.from_dict({m: [a] for m, a in sc.schedule_rows})
        buyers = {clusters.cluster_of(b["addresses"][0]) for b in sc.manifest["tsb_buyers"]}
        prev = None
        for tol in AC8_TOLS_ZEC:
            r = scan(view, clusters, reg, schedule, deposit_tol=zat(tol), activity_limit=25, attribution=res)
            keys = {(c.cluster_id, c.period) for c in r.candidates}
            results.append((sc.config.seed, tol, len(keys), prev is None or keys <= prev,
                            buyers <= r.flagged_clusters(), len(buyers)))
            prev = keys
    ok = all(sub and flagged and nb > 0 for _, _, _, sub, flagged, nb in results)
    counts = ", ".join(f"s{s}/tol{t}:{n}" for s, t, n, *_ in results)
    record(8, ok, f"candidates never grow as deposit_tol shrinks 5->1 ZEC; all planted buyers flagged ({counts})")


# -- optional full-scale checks ---------------------------------------

MAINNET = os.environ.get("ZANON_MAINNET_STORE")
needs_mainnet = pytest.mark.skipif(not MAINNET, reason="set ZANON_MAINNET_STORE to a mainnet export store")
MAINNET_TIP = 258_471


@pytest.fixture(scope="module")
def mainnet():
    with Store(MAINNET, create=False) as store:
        view = store.snapshot(tip=MAINNET_TIP)
        reg = TagRegistry.from_rows(store.load_tag_rows())
    assert view.tip_height == MAINNET_TIP, "export must reach block 258,471"
    return view, reg


@pytest.fixture(scope="module")
def mainnet_attribution(mainnet):
    view, reg = mainnet
    return run_pipeline(view, reg)


@pytest.mark.mainnet
@needs_mainnet
def test_ac9_kind_counts(mainnet):
    view, _ = mainnet
    kb = kind_breakdown(view)
    want = {TxKind.TRANSPARENT: 1_648_745, TxKind.COINGEN: 258_472, TxKind.DESHIELDED: 177_009,
            TxKind.SHIELDED: 140_796, TxKind.MIXED: 10_891, TxKind.PRIVATE: 6_934}
    got = {k: kb.counts[k] for k in want}
    record(9, got == want, f"kind counts {dict((k.value, v) for k, v in got.items())} (exact)")


@pytest.mark.mainnet
@needs_mainnet
def test_ac10_clusters(mainnet):
    view, _ = mainnet
    c = build_clusters(view)
    record(10, (len(c), c.multi_address_count()) == (560_319, 97_539),
           f"{len(c)} clusters, {c.multi_address_count()} multi-address (exact, change linking off)")


@pytest.mark.mainnet
@needs_mainnet
def test_ac11_pool_totals(mainnet):
    view, _ = mainnet
    s = pool_series(view)
    got = (s.total_deposited, s.total_withdrawn, s.final_balance)
    want = (zat(3_901_124), zat(3_788_889), zat(112_235))
    ok = all(abs(g - w) <= AC11_TOL for g, w in zip(got, want))
    record(11, ok, f"deposited/withdrawn/balance zat {got} vs {want} (tol 1 ZEC)")


@pytest.mark.mainnet
@needs_mainnet
def test_ac12_attribution_coverage(mainnet, mainnet_attribution):
    view, _ = mainnet
    res = mainnet_attribution
    miner, founder = res.withdrawals[Actor.MINER], res.withdrawals[Actor.FOUNDER]
    miner_pct = float(res.withdrawal_share(Actor.MINER) * 100)
    founder_pct = float(res.withdrawal_share(Actor.FOUNDER) * 100)
    an = anonymity_reduction(view, res, find_round_trips(view, 100))
    total = float(an.total_pct)
    ok = (miner.count == 120_629 and founder.count == 2_103
          and abs(miner_pct - 52.1) <= AC12_PP and abs(founder_pct - 13.5) <= AC12_PP
          and abs(total - 69.1) <= AC12_ANON_PP)
    record(12, ok, f"miner {miner.count} txs {miner_pct:.2f}%, founder {founder.count} txs {founder_pct:.2f}%, "
           f"anonymity reduction {total:.2f}% (tol 0.2/0.3 pp)")


@pytest.mark.mainnet
@needs_mainnet
def test_ac13_round_trips(mainnet):
    view, _ = mainnet
    curve = dict((g, (n, v)) for g, n, v in linked_value_curve(view, [10, 100]))
    n100, v100 = curve[100]
    ok = n100 == 12_841 and abs(v100 - 109_451_323_684_000) <= AC13_VALUE_TOL and curve[10][1] * 10 >= v100 * 7
    record(13, ok, f"gap 100: {n100} links, {v100} zat; gap-10 value {curve[10][1]} zat (>= 70%)")
