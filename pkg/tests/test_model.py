from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from chainkit import ChainKit, addr, zat
from zanon.errors import ConservationError, DataError, IntegrityError, UnresolvedInputError
from zanon.model import (
    MAX_MONEY,
    JoinSplit,
    Transaction,
    TxIn,
    TxKind,
    TxOut,
    classify_tx,
    conservation_check,
    decimal_places,
    format_zec,
    pool_deposit,
    pool_withdrawal,
    zec_to_zat,
)

NF = (b"\x01" * 32, b"\x02" * 32)


def js(old=0, new=0):
    return JoinSplit(old, new, NF, NF)


def test_zec_to_zat_exact():
    assert zec_to_zat("250.0001") == 25_000_010_000
    assert zec_to_zat("0.00000001") == 1
    assert zec_to_zat(Decimal("12.5")) == 1_250_000_000
    assert zec_to_zat(3) == 300_000_000


@pytest.mark.parametrize("bad", ["1.000000001", "-1", "abc", "nan", "inf"])
def test_zec_to_zat_rejects(bad):
    with pytest.raises(ValueError):
        zec_to_zat(bad)


def test_zec_to_zat_refuses_float():
    with pytest.raises(TypeError):
        zec_to_zat(0.1)


@given(st.integers(min_value=0, max_value=MAX_MONEY))
def test_format_round_trip(z):
    assert zec_to_zat(format_zec(z)) == z


def test_decimal_places():
    assert decimal_places(zat("100")) == 0
    assert decimal_places(zat("250.0001")) == 4
    assert decimal_places(zat("0.12345678")) == 8
    assert decimal_places(zat("1.5")) == 1


def test_classification_covers_every_kind():
    a = addr("a")
    cases = {
        TxKind.COINGEN: Transaction("c", 0, 0, True, (), (TxOut(a, 1, 0),)),
        TxKind.TRANSPARENT: Transaction("t", 0, 0, False, (TxIn("c", 0),), (TxOut(a, 1, 0),)),
        TxKind.SHIELDED: Transaction("s", 0, 0, False, (TxIn("c", 0),), (), (js(old=1),)),
        TxKind.DESHIELDED: Transaction("d", 0, 0, False, (), (TxOut(a, 1, 0),), (js(new=1),)),
        TxKind.PRIVATE: Transaction("p", 0, 0, False, (), (), (js(),)),
        TxKind.MIXED: Transaction("m", 0, 0, False, (TxIn("c", 0),), (TxOut(a, 1, 0),), (js(old=1),)),
    }
    for kind, tx in cases.items():
        assert classify_tx(tx) is kind


def test_joinsplit_validation():
    with pytest.raises(DataError):
        JoinSplit(1, 1, NF, NF)
    with pytest.raises(DataError):
        JoinSplit(1, 0, (b"x",), NF)
    with pytest.raises(IntegrityError):
        JoinSplit(MAX_MONEY + 1, 0, NF, NF)


def test_pool_sums_overflow():
    tx = Transaction("o", 0, 0, False, (), (), (js(old=MAX_MONEY), js(old=MAX_MONEY)))
    with pytest.raises(IntegrityError):
        pool_deposit(tx)


def test_pool_values():
    tx = Transaction("d", 0, 0, False, (), (TxOut(addr("a"), 5, 0),), (js(new=3), js(new=2)))
    assert pool_withdrawal(tx) == 5 and pool_deposit(tx) == 0


def test_output_index_and_coinbase_shape():
    with pytest.raises(DataError):
        Transaction("x", 0, 0, False, (), (TxOut(addr("a"), 1, 1),))
    with pytest.raises(DataError):
        Transaction("x", 0, 0, True, (TxIn("c", 0),), ())
    with pytest.raises(DataError):
        TxOut(" t1abc", 1, 0)


def test_conservation():
    k = ChainKit()
    cb = k.new_block()
    k.tx([(cb, 0)], [(addr("a"), "12.4999")])
    k.tx(outputs=[(addr("b"), "1")], vpub_new="1.0001")
    view = k.view()
    fees = [conservation_check(tx) for tx in view.transactions]
    assert fees == [0, 0, zat("0.0001"), zat("0.0001")]


def test_conservation_violation_and_unresolved():
    k = ChainKit()
    cb = k.new_block()
    k.tx([(cb, 0)], [(addr("a"), "13")])
    view = k.view()
    with pytest.raises(ConservationError):
        conservation_check(view.transactions[-1])
    with pytest.raises(UnresolvedInputError):
        conservation_check(Transaction("u", 0, 0, False, (TxIn("zz", 0),), ()))
