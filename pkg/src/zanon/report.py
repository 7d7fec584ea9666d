"""Full analysis run and the CSV/JSON report bundle.

Every amount is written twice, as an integer zat column and as an 8-decimal
ZEC string; ratios are exact fractions rendered as fixed-point strings. The
bundle depends only on the chain, the tags and the options, so identical
inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date
from fractions import Fraction
from pathlib import Path
from typing import Optional

from . import attribute, link, stats, tsb
from .chain import ChainView
from .cluster import ClusterSet, build_clusters, write_clusters_csv
from .errors import DataError, UndefinedResult
from .model import KIND_ORDER, ZAT_PER_ZEC, format_zec
from .stats import fmt_ratio
from .tags import TagRegistry, cluster_tags

DEFAULT_GAPS = (1, 2, 5, 10, 20, 50, 100)


@dataclass
class AnalysisOptions:
    max_rounds: int = 10
    use_h3: bool = True
    use_h4: bool = True
    max_gap: int = 100
    curve_gaps: tuple[int, ...] = DEFAULT_GAPS
    spike_threshold: int = 5000 * ZAT_PER_ZEC
    exclusions: frozenset = frozenset()
    schedule: tsb.PriceSchedule = tsb.DEFAULT_SCHEDULE
    deposit_tol: int = 5 * ZAT_PER_ZEC
    cluster_tol: int = 1 * ZAT_PER_ZEC
    activity_limit: int = 250
    split_date: Optional[date] = None
    tsb_window: str = "calendar"


@dataclass
class Analysis:
    view: ChainView
    registry: TagRegistry
    options: AnalysisOptions
    kinds: stats.KindBreakdown
    pool: stats.PoolSeries
    addresses: stats.AddressStats
    wealth: stats.WealthDistribution
    zz: stats.ZZStats
    spikes: list
    clusters: ClusterSet
    attribution: attribute.AttributionResult
    founders: attribute.FounderAddressReport
    round_trips: list
    curve: list
    uniqueness: link.ValueUniqueness
    anonymity: Optional[link.AnonymityReduction]
    tsb_clusters: ClusterSet
    tsb: tsb.TsbScan
    full_registry: TagRegistry = field(repr=False, default=None)


def run_analysis(view: ChainView, registry: TagRegistry, options: AnalysisOptions = None) -> Analysis:
    if view.is_empty:
        raise DataError("empty store")
    opts = options or AnalysisOptions()
    attribution = attribute.run_pipeline(view, registry, opts.max_rounds, opts.use_h3, opts.use_h4)
    full = registry.copy()
    for tag in attribution.new_tags:
        full.add(tag)
    trips = link.find_round_trips(view, opts.max_gap)
    try:
        anonymity = link.anonymity_reduction(view, attribution, trips)
    except UndefinedResult:
        anonymity = None
    tsb_clusters = build_clusters(view, use_change=True, exclusions=opts.exclusions)
    return Analysis(
        view=view,
        registry=registry,
        options=opts,
        kinds=stats.kind_breakdown(view),
        pool=stats.pool_series(view),
        addresses=stats.address_stats(view),
        wealth=stats.wealth_distribution(view),
        zz=stats.zz_joinsplit_stats(view),
        spikes=stats.spike_report(view, opts.spike_threshold),
        clusters=build_clusters(view),
        attribution=attribution,
        founders=attribute.founder_report(view, full),
        round_trips=trips,
        curve=link.linked_value_curve(view, opts.curve_gaps),
        uniqueness=link.value_uniqueness_stats(trips),
        anonymity=anonymity,
        tsb_clusters=tsb_clusters,
        tsb=tsb.scan(
            view, tsb_clusters, full, opts.schedule, opts.deposit_tol, opts.cluster_tol,
            opts.activity_limit, opts.split_date, opts.tsb_window, attribution,
        ),
        full_registry=full,
    )


def _write(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _pct(num, den) -> str:
    return fmt_ratio(Fraction(num, den), places=2) if den else ""


def kind_rows(a: Analysis):
    return [[k, n, p] for k, n, p in a.kinds.rows()]


def pool_rows(a: Analysis):
    return [
        [p.height, p.time, p.deposited, format_zec(p.deposited), p.withdrawn, format_zec(p.withdrawn),
         p.balance, format_zec(p.balance)]
        for p in a.pool.points
    ]


def coverage_rows(a: Analysis):
    rows = []
    for direction, cells in (("deposit", a.attribution.deposits), ("withdrawal", a.attribution.withdrawals)):
        total = sum(c.value for c in cells.values())
        for actor in attribute.ACTOR_ORDER:
            c = cells[actor]
            rows.append([direction, actor.value, c.count, c.value, format_zec(c.value), _pct(c.value, total)])
    return rows


def summary(a: Analysis) -> dict:
    wealth = a.wealth
    out = {
        "tip_height": a.view.tip_height,
        "digest": a.view.digest(),
        "transactions": a.kinds.total,
        "kinds": {k.value: a.kinds.counts[k] for k in KIND_ORDER},
        "pool": {
            "deposited_zat": a.pool.total_deposited,
            "withdrawn_zat": a.pool.total_withdrawn,
            "balance_zat": a.pool.final_balance,
        },
        "addresses": {
            "distinct": a.addresses.distinct_t,
            "shielding_inputs": a.addresses.ever_shielding_inputs,
            "deshielding_outputs": a.addresses.ever_deshielding_outputs,
        },
        "wealth": {
            "addresses": wealth.address_count,
            "nonzero_percent": fmt_ratio(wealth.nonzero_fraction, 2),
            "top1_percent_share": fmt_ratio(wealth.top_percent_share(1), 2),
            "max_balance_zat": wealth.max_balance,
        },
        "zz": {
            "private_txs": a.zz.private_tx_count,
            "joinsplits": a.zz.joinsplit_count,
            "single_joinsplit_percent": fmt_ratio(a.zz.single_js_fraction, 2),
        },
        "clusters": {
            "count": len(a.clusters),
            "multi_address": a.clusters.multi_address_count(),
            "largest": a.clusters.size(0) if len(a.clusters) else 0,
        },
        "attribution": {
            "rounds": a.attribution.rounds,
            "converged": a.attribution.converged,
            "heuristic3_txs": len(a.attribution.h3.txs),
            "heuristic4_txs": len(a.attribution.h4.txs),
            "new_tags": len(a.attribution.new_tags),
            "conflicts": len(a.attribution.h3.conflicts) + len(a.attribution.h4.conflicts),
            "anomalies": len(a.attribution.h4.anomalies),
        },
        "round_trips": {
            "max_gap": a.options.max_gap,
            "links": len(a.round_trips),
            "value_zat": sum(r.value for r in a.round_trips),
        },
        "tsb": {"flagged_clusters": len(a.tsb.flagged_clusters()), "candidates": len(a.tsb.candidates)},
    }
    if a.anonymity is not None:
        an = a.anonymity
        out["anonymity"] = {
            "founder_percent": fmt_ratio(an.founder_pct, 2, percent=False),
            "miner_percent": fmt_ratio(an.miner_pct, 2, percent=False),
            "roundtrip_only_percent": fmt_ratio(an.roundtrip_only_pct, 2, percent=False),
            "total_percent": fmt_ratio(an.total_pct, 2, percent=False),
        }
    return out


def write_bundle(a: Analysis, outdir) -> list[Path]:
    """Write every report file into ``outdir`` and return their paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [
        _write(out / "kind_breakdown.csv", ["kind", "count", "percent"], kind_rows(a)),
        _write(out / "pool_series.csv",
               ["height", "time", "deposited_zat", "deposited_zec", "withdrawn_zat", "withdrawn_zec",
                "balance_zat", "balance_zec"], pool_rows(a)),
        _write(out / "daily_kinds.csv", ["day"] + [k.value for k in KIND_ORDER],
               [[d, *(c[k] for k in KIND_ORDER)] for d, c in stats.daily_kind_counts(a.view)]),
        _write(out / "daily_value_fractions.csv", ["day", *stats.VALUE_CATEGORIES],
               [[d, *(fmt_ratio(f[c], 6, percent=False) for c in stats.VALUE_CATEGORIES)]
                for d, f in stats.daily_value_fractions(a.view)]),
        _write(out / "zz_daily.csv", ["day", "private_txs", "joinsplits"],
               [[d, n, j] for d, (n, j) in a.zz.per_day.items()]),
        _write(out / "spikes.csv", ["height", "direction", "amount_zat", "amount_zec"],
               [[s.height, s.direction, s.amount, format_zec(s.amount)] for s in a.spikes]),
        _write(out / "cluster_tags.csv", ["cluster_id", "size", "category", "count"],
               [[cid, a.clusters.size(cid), cat, n]
                for cid, hist in cluster_tags(a.full_registry, a.clusters).items()
                for cat, n in sorted(hist.items())]),
        _write(out / "founders.csv", ["row", "address", "deposits", "total_zat", "total_zec", "quantum_deposits"],
               a.founders.csv_rows()),
        _write(out / "coverage.csv",
               ["direction", "category", "tx_count", "value_zat", "value_zec", "value_percent"],
               coverage_rows(a)),
        _write(out / "round_trips.csv",
               ["value_zat", "deposit_txid", "deposit_height", "withdrawal_txid", "withdrawal_height", "gap"],
               [[r.value, r.deposit_txid, r.deposit_height, r.withdrawal_txid, r.withdrawal_height, r.gap]
                for r in a.round_trips]),
        _write(out / "linked_value_curve.csv", ["gap", "links", "value_zat", "value_zec"],
               [[g, n, v, format_zec(v)] for g, n, v in a.curve]),
        _write(out / "value_uniqueness.csv", ["decimal_places", "count"], list(enumerate(a.uniqueness.histogram))),
    ]
    clusters_path = out / "clusters.csv"
    write_clusters_csv(a.clusters, clusters_path)
    attribution_path = out / "attribution.csv"
    attribute.write_attribution_csv(a.view, a.attribution, attribution_path)
    table_path, cand_path = out / "tsb_table.csv", out / "tsb_candidates.csv"
    tsb.write_table_csv(a.tsb, table_path)
    tsb.write_candidates_csv(a.tsb, cand_path)
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary(a), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    paths += [clusters_path, attribution_path, table_path, cand_path, summary_path]
    return sorted(paths)


# Used by the CLI to print column orders in --help.
SCHEMAS = {
    "kind_breakdown.csv": "kind,count,percent",
    "pool_series.csv": "height,time,deposited_zat,deposited_zec,withdrawn_zat,withdrawn_zec,balance_zat,balance_zec",
    "daily_kinds.csv": "day," + ",".join(k.value for k in KIND_ORDER),
    "daily_value_fractions.csv": "day," + ",".join(stats.VALUE_CATEGORIES),
    "zz_daily.csv": "day,private_txs,joinsplits",
    "spikes.csv": "height,direction,amount_zat,amount_zec",
    "clusters.csv": "cluster_id,size,member_address",
    "cluster_tags.csv": "cluster_id,size,category,count",
    "founders.csv": "row,address,deposits,total_zat,total_zec,quantum_deposits",
    "attribution.csv": "txid,kind,category,value_zat,round_discovered",
    "coverage.csv": "direction,category,tx_count,value_zat,value_zec,value_percent",
    "round_trips.csv": "value_zat,deposit_txid,deposit_height,withdrawal_txid,withdrawal_height,gap",
    "linked_value_curve.csv": "gap,links,value_zat,value_zec",
    "value_uniqueness.csv": "decimal_places,count",
    "tsb_table.csv": "period,<one column per schedule amount>",
    "tsb_candidates.csv": "cluster_id,period,matched_zat,cluster_total_zat,tx_activity_count,deposit_txids",
}
