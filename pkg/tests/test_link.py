from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from chainkit import ChainKit, addr, random_chain
from zanon.attribute import Actor
from zanon.chain import ChainView
from zanon.link import (
    AnonymityReduction,
    RoundTrip,
    anonymity_reduction,
    find_round_trips,
    linked_value_curve,
    overlap_with_attribution,
    value_uniqueness_stats,
    write_round_trips_csv,
)
from zanon.model import pool_deposit, pool_withdrawal
from zanon.synth import ScenarioConfig, build


def brute_force(view, max_gap):
    """Compare every deposit with every withdrawal; keep values seen exactly once each way."""
    txs = view.transactions
    deps = [t for t in txs if pool_deposit(t)]
    wds = [t for t in txs if pool_withdrawal(t)]
    out = []
    for d in deps:
        v = pool_deposit(d)
        if sum(pool_deposit(o) == v for o in deps) != 1:
            continue
        matches = [w for w in wds if pool_withdrawal(w) == v]
        if len(matches) != 1:
            continue
        w = matches[0]
        if 1 <= w.block_height - d.block_height <= max_gap:
            out.append((v, d.txid, d.block_height, w.txid, w.block_height))
    return sorted(out, key=lambda r: (r[2], r[1]))


def as_tuples(trips):
    return [(r.value, r.deposit_txid, r.deposit_height, r.withdrawal_txid, r.withdrawal_height) for r in trips]


@pytest.mark.parametrize("seed", range(6))
def test_matches_brute_force_random(seed):
    view = random_chain(100 + seed, 60, 400, shield_rate=0.5)
    assert brute_force(view, 100), "oracle comparison would be vacuous"
    for gap in (1, 10, 100):
        assert as_tuples(find_round_trips(view, gap)) == brute_force(view, gap)


def test_matches_brute_force_scenario(small_view):
    for gap in (1, 10, 100):
        assert as_tuples(find_round_trips(small_view, gap)) == brute_force(small_view, gap)


def test_matches_manifest(scenario, view):
    got = [list(t) for t in as_tuples(find_round_trips(view, scenario.config.round_trip_gap_max))]
    assert got == scenario.manifest["round_trips"]


def test_gap_boundaries():
    k = ChainKit()
    cb = k.new_block()
    d = k.tx([(cb, 0)], [], vpub_old="12.49990001")
    same = k.tx([], [(addr("x"), "1")], vpub_new="1.2345")  # withdrawal only
    k.skip(3)
    w = k.tx([], [(addr("y"), "12.49980001")], vpub_new="12.49990001")
    view = k.view()
    gap = view.tx(w).block_height - view.tx(d).block_height
    assert gap == 3
    assert find_round_trips(view, 2) == []
    assert [r.withdrawal_txid for r in find_round_trips(view, 3)] == [w]
    with pytest.raises(ValueError):
        find_round_trips(view, 0)
    assert same


def test_same_block_and_reversed_order_excluded():
    k = ChainKit()
    cb = k.new_block()
    cb2 = k.new_block()
    k.tx([(cb, 0)], [], vpub_old="12.4999")
    k.tx([], [(addr("a"), "12.4998")], vpub_new="12.4999")  # gap 0
    w = k.tx([], [(addr("b"), "3")], vpub_new="3.0001")
    k.new_block()
    k.tx([(cb2, 0)], [(addr("c"), "9.4998")], vpub_old="3.0001")  # deposit after withdrawal
    assert find_round_trips(k.view(), 100) == []
    assert w


def test_duplicate_values_break_uniqueness():
    k = ChainKit()
    a, b = k.new_block(), k.new_block()
    k.tx([(a, 0)], [], vpub_old="12.4999")
    k.tx([(b, 0)], [], vpub_old="12.4999")
    k.new_block()
    k.tx([], [(addr("a"), "12.4998")], vpub_new="12.4999")
    assert find_round_trips(k.view(), 100) == []


@pytest.mark.parametrize("seed", range(4))
def test_curve_is_monotone_and_consistent(seed):
    view = random_chain(200 + seed, 50, 400, shield_rate=0.5)
    gaps = [1, 2, 5, 10, 20, 50, 100]
    curve = linked_value_curve(view, gaps)
    for (g1, n1, v1), (g2, n2, v2) in zip(curve, curve[1:]):
        assert n1 <= n2 and v1 <= v2
    for g, n, v in curve:
        trips = find_round_trips(view, g)
        assert (n, v) == (len(trips), sum(r.value for r in trips))
    with pytest.raises(ValueError):
        linked_value_curve(view, [10, 1])


def test_value_uniqueness_histogram():
    trips = [RoundTrip(v, "d", 0, "w", 1) for v in (100_000_000, 123_450_000, 1)]
    u = value_uniqueness_stats(trips)
    assert u.count == 3 and u.histogram[0] == 1 and u.histogram[4] == 1 and u.histogram[8] == 1
    assert u.fraction_above(4) == Fraction(1, 3)
    assert value_uniqueness_stats([]).fraction_above(2) == 0


def test_anonymity_arithmetic():
    an = AnonymityReduction(1000, 135, 521, 35)
    assert an.founder_miner_pct == Fraction(656, 10)
    assert an.total_pct == Fraction(691, 10)


def test_anonymity_counts_only_unattributed_trips(scenario, view, attribution):
    trips = find_round_trips(view, 100)
    an = anonymity_reduction(view, attribution, trips)
    expected = sum(
        pool_withdrawal(view.tx(r.withdrawal_txid)) for r in trips
        if attribution.categories[r.withdrawal_txid] is Actor.OTHER)
    assert an.roundtrip_only_value == expected
    assert an.total_withdrawn == attribution.total_withdrawn
    assert 0 <= an.total_pct <= 100
    ov = overlap_with_attribution(attribution, trips)
    assert ov is None or 0 <= ov <= 1


def test_generator_round_trips_are_the_only_unique_pairs():
    for seed in (21, 22):
        sc = build(ScenarioConfig(seed=seed, block_count=400))
        view = ChainView.from_blocks(sc.blocks)
        gmax = sc.config.round_trip_gap_max
        assert [list(t) for t in brute_force(view, 10_000)] == sc.manifest["round_trips"]
        assert all(r[4] - r[2] <= gmax for r in sc.manifest["round_trips"])


def test_csv(tmp_path, small_view):
    trips = find_round_trips(small_view, 100)
    p = tmp_path / "rt.csv"
    write_round_trips_csv(trips, p)
    assert len(p.read_text().splitlines()) == len(trips) + 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 120))
def test_round_trip_invariants(seed, gap):
    view = random_chain(seed, 40, 200, shield_rate=0.5)
    trips = find_round_trips(view, gap)
    assert as_tuples(trips) == brute_force(view, gap)
    assert len({r.value for r in trips}) == len(trips)
    assert all(1 <= r.gap <= gap for r in trips)
    for r in trips:
        assert view.deposits_of_value(r.value) == [r.deposit_txid]
        assert view.withdrawals_of_value(r.value) == [r.withdrawal_txid]
