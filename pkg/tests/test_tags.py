import pytest

from chainkit import ChainKit, addr
from zanon.cluster import build_clusters
from zanon.errors import ParseError, TagConflict
from zanon.store import Store
from zanon.tags import (
    Category,
    Source,
    Tag,
    TagRegistry,
    cluster_tags,
    derive_miner_tags,
    valid_t_address,
    write_tags_csv,
)

A, B = addr("a"), addr("b")


def test_founder_excludes_miner_and_pool():
    reg = TagRegistry()
    reg.add(Tag(A, Category.FOUNDER, "", Source.PARAMS))
    with pytest.raises(TagConflict):
        reg.add(Tag(A, Category.MINER, "", Source.COINGEN))
    with pytest.raises(TagConflict):
        reg.add(Tag(A, Category.POOL, "p", Source.CSV))
    reg.add(Tag(A, Category.EXCHANGE, "x", Source.CSV))
    assert reg.categories_of(A) == {Category.FOUNDER, Category.EXCHANGE}


def test_named_categories_must_agree():
    reg = TagRegistry()
    reg.add(Tag(A, Category.POOL, "flypool", Source.CSV))
    with pytest.raises(TagConflict):
        reg.add(Tag(A, Category.POOL, "other", Source.HEURISTIC4))
    assert reg.pool_name(A) == "flypool"


def test_one_category_per_source():
    reg = TagRegistry()
    reg.add(Tag(A, Category.EXCHANGE, "x", Source.CSV))
    with pytest.raises(TagConflict):
        reg.add(Tag(A, Category.SERVICE, "s", Source.CSV))


def test_duplicates_are_idempotent():
    reg = TagRegistry()
    assert reg.add(Tag(A, Category.MINER, "", Source.COINGEN))
    assert not reg.add(Tag(A, Category.MINER, "", Source.COINGEN))
    assert len(reg) == 1


def test_label_prefers_specific():
    reg = TagRegistry()
    reg.add(Tag(A, Category.MINER, "", Source.COINGEN))
    reg.add(Tag(A, Category.POOL, "slush", Source.CSV))
    assert reg.label(A) == "pool:slush"
    assert reg.label(B) == ""


def test_founder_params_file(tmp_path):
    p = tmp_path / "f.txt"
    p.write_text(f"# founders\n{A}\n\n{B}  # second\n{A}\n")
    reg = TagRegistry()
    assert reg.load_founder_params(p) == 2
    p.write_text("not-an-address\n")
    with pytest.raises(ParseError) as exc:
        reg.load_founder_params(p)
    assert exc.value.line == 1


def test_tag_csv_rejects_rows_individually(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text(
        "address,category,name,source\n"
        f"{A},pool,flypool,csv\n"
        f"{A},pool,other,heuristic4\n"
        f"{B},wizard,,csv\n"
        "bogus,exchange,x,csv\n"
        f"{B},exchange,x,\n"
    )
    reg = TagRegistry()
    assert reg.import_tags_csv(p) == 2
    assert [line for line, _ in reg.rejected] == [3, 4, 5]
    bad = tmp_path / "bad.csv"
    bad.write_text("address,category\n")
    with pytest.raises(ParseError):
        reg.import_tags_csv(bad)


def test_valid_address_shape():
    assert valid_t_address(A)
    assert not valid_t_address("t1" + "0" * 33)  # 0 is not base58
    assert not valid_t_address("z" + A[1:])


def test_derive_miner_tags_skips_founders():
    k = ChainKit()
    k.new_block(coinbase_to=[(addr("m1"), "10"), (addr("f"), "2.5")])
    view = k.view()
    reg = TagRegistry()
    reg.add(Tag(addr("f"), Category.FOUNDER, "", Source.PARAMS))
    assert derive_miner_tags(view, reg) == 2  # default miner of block 0 and m1
    assert reg.has(addr("m1"), Category.MINER) and not reg.has(addr("f"), Category.MINER)
    assert derive_miner_tags(view, reg) == 0


def test_store_round_trip(tmp_path, small_scenario):
    reg = TagRegistry(run_id="r1")
    for a, c, n, s in small_scenario.tag_rows:
        reg.add(Tag(a, Category(c), n, Source(s)))
    with Store(tmp_path / "st") as store:
        with store.writer():
            assert store.save_tags(reg.rows()) == len(reg)
            assert store.save_tags(reg.rows()) == 0
        back = TagRegistry.from_rows(store.load_tag_rows())
    assert back.rows() == reg.rows()
    assert all(t.run_id == "r1" for t in back)


def test_cluster_tags(small_scenario, small_view):
    reg = TagRegistry()
    for a, c, n, s in small_scenario.tag_rows:
        reg.add(Tag(a, Category(c), n, Source(s)))
    clusters = build_clusters(small_view)
    hist = cluster_tags(reg, clusters)
    observed = sum(1 for t in reg if clusters.get(t.address) is not None)
    assert sum(sum(c.values()) for c in hist.values()) == observed
    assert list(hist) == sorted(hist)


def test_write_tags_csv(tmp_path):
    p = tmp_path / "t.csv"
    write_tags_csv([Tag(A, Category.POOL, "p", Source.HEURISTIC4)], p)
    reg = TagRegistry()
    assert reg.import_tags_csv(p) == 1
    assert reg.tags_of(A) == {Tag(A, Category.POOL, "p", Source.HEURISTIC4)}
