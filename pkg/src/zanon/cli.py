"""Command-line entry point.

Exit status: 0 on success, 1 for usage or configuration errors, 2 for data
or integrity errors. Diagnostics go to standard error; standard output carries
only CSV or JSON data.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from datetime import date
from pathlib import Path
from typing import Optional

from . import __version__
from .errors import ConfigError, DataError, ZanonError
from .model import conservation_check, format_zec, zec_to_zat
from .report import SCHEMAS, AnalysisOptions, run_analysis, write_bundle
from .stats import fmt_ratio
from .synth.config import read_key_values

log = logging.getLogger("zanon")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# key=value config keys and the flag each one backs.
CONFIG_KEYS = {
    "store", "rpc_url", "rpc_user", "rpc_password", "founders", "tags", "exclusions",
    "max_rounds", "max_gap", "curve_gaps", "spike_threshold", "schedule", "deposit_tol",
    "cluster_tol", "activity_limit", "split_date", "tsb_window", "use_change", "output",
}


def _schema_epilog(*names):
    return "CSV columns:\n" + "\n".join(f"  {n}: {SCHEMAS[n]}" for n in names)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="zanon", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def cmd(name, help, epilog=None, store=True):
        sp = sub.add_parser(name, help=help, epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
        if store:
            sp.add_argument("--store", help="store directory")
        return sp

    sp = cmd("ingest", "fetch blocks from a JSON-RPC node (credentials via ZANON_RPC_* env vars)")
    sp.add_argument("--rpc-url")
    sp.add_argument("--from-height", type=int)
    sp.add_argument("--to-height", type=int)
    sp.add_argument("--workers", type=int, default=4)
    sp.add_argument("--batch", type=int, default=64)

    sp = cmd("import", "load a newline-delimited JSON dump")
    sp.add_argument("dump")
    sp.add_argument("--no-resolve", action="store_true", help="skip the input resolution pass")

    cmd("resolve", "attach address and value of the spent output to every input")

    sp = cmd("stats", "chain statistics", _schema_epilog(
        "kind_breakdown.csv", "pool_series.csv", "spikes.csv", "daily_kinds.csv", "daily_value_fractions.csv",
        "zz_daily.csv") + "\n  addresses, wealth, zz: metric,value")
    sp.add_argument("--table", default="kinds", choices=[
        "kinds", "pool", "addresses", "wealth", "zz", "zz-daily", "spikes", "daily-kinds", "daily-values"])
    sp.add_argument("--spike-threshold", help="ZEC; default 5000")
    sp.add_argument("--height", type=int, help="wealth snapshot height (default tip)")
    sp.add_argument("-o", "--output")

    sp = cmd("cluster", "multi-input (and optional change) address clustering", _schema_epilog("clusters.csv"))
    sp.add_argument("--use-change", action="store_true", help="also link single-output change")
    sp.add_argument("--exclusions", help="file of addresses never linked as change")
    sp.add_argument("-o", "--output")

    sp = cmd("tag", "load founder and label files into the store and derive miner tags")
    sp.add_argument("--founders", help="founder address list, one per line")
    sp.add_argument("--tags", action="append", help="CSV address,category,name,source (repeatable)")
    sp.add_argument("--no-derive-miners", action="store_true")

    sp = cmd("attribute", "founder/miner attribution of pool transactions", _schema_epilog(
        "attribution.csv", "coverage.csv", "founders.csv"))
    sp.add_argument("--table", default="attribution", choices=["attribution", "coverage", "founders", "tags"])
    sp.add_argument("--max-rounds", type=int)
    sp.add_argument("--no-h3", action="store_true")
    sp.add_argument("--no-h4", action="store_true")
    sp.add_argument("-o", "--output")

    sp = cmd("link", "round trips of chain-unique values", _schema_epilog(
        "round_trips.csv", "linked_value_curve.csv", "value_uniqueness.csv") + "\n  anonymity: metric,percent")
    sp.add_argument("--max-gap", type=int)
    sp.add_argument("--table", default="trips", choices=["trips", "curve", "uniqueness", "anonymity"])
    sp.add_argument("--gaps", help="comma-separated gaps for the curve")
    sp.add_argument("-o", "--output")

    sp = cmd("tsb", "scan for deposits matching a price schedule", _schema_epilog(
        "tsb_table.csv", "tsb_candidates.csv") + "\n  schedule file: month,amount_zec")
    sp.add_argument("--schedule", help="CSV month,amount_zec (default: built-in 2017 schedule)")
    sp.add_argument("--deposit-tol", help="ZEC, default 5")
    sp.add_argument("--cluster-tol", help="ZEC, default 1")
    sp.add_argument("--activity-limit", type=int)
    sp.add_argument("--split-date", help="YYYY-MM-DD splitting its month into before/after")
    sp.add_argument("--window", dest="tsb_window", choices=["calendar", "sliding"])
    sp.add_argument("--exclusions")
    sp.add_argument("--table", default="table", choices=["table", "candidates", "detail"])
    sp.add_argument("-o", "--output")

    sp = cmd("synth", "generate a synthetic chain with ground truth", store=False)
    sp.add_argument("--scenario", help="scenario key=value file")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    sp.add_argument("--out", required=True, help="output directory")

    sp = cmd("report", "write the full report bundle", _schema_epilog(*sorted(SCHEMAS)))
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--max-gap", type=int)
    sp.add_argument("--max-rounds", type=int)
    sp.add_argument("--schedule")
    sp.add_argument("--split-date")
    sp.add_argument("--exclusions")

    sp = cmd("check", "verify conservation, pool balance and resolution; optionally score against a manifest")
    sp.add_argument("--manifest", help="generator manifest.json")
    return p


class Context:
    def __init__(self, args, config: dict):
        self.args = args
        self.config = config

    def get(self, key, default=None):
        v = getattr(self.args, key, None)
        if v is not None and v is not False:
            return v
        return self.config.get(key, default)

    def path(self, key, required=False) -> Optional[Path]:
        v = self.get(key)
        if v is None:
            if required:
                raise UsageError(f"--{key.replace('_', '-')} is required")
            return None
        p = Path(v)
        if not p.exists():
            raise UsageError(f"{key}: {p} does not exist")
        return p

    def amount(self, key, default_zec) -> int:
        try:
            return zec_to_zat(str(self.get(key, default_zec)))
        except (TypeError, ValueError) as exc:
            raise UsageError(f"{key}: {exc}") from None

    def integer(self, key, default) -> int:
        try:
            return int(self.get(key, default))
        except ValueError:
            raise UsageError(f"{key} must be an integer") from None

    def store(self, create=False):
        from .store import Store

        path = self.get("store")
        if path is None:
            raise UsageError("--store is required")
        if not create and not Path(path).exists():
            raise DataError(f"empty store: {path} does not exist")
        return Store(path, create=create)


def _out(ctx: Context):
    """Writable text stream for the command's data output."""
    target = getattr(ctx.args, "output", None)
    if target:
        return open(target, "w", newline="", encoding="utf-8")
    return _Stdout()


class _Stdout:
    def write(self, s):
        return sys.stdout.write(s)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        sys.stdout.flush()


def _emit(ctx, header, rows):
    with _out(ctx) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _view(ctx):
    store = ctx.store()
    try:
        view = store.snapshot()
        rows = store.load_tag_rows()
    finally:
        store.close()
    if view.is_empty:
        raise DataError("empty store")
    from .tags import TagRegistry

    return view, TagRegistry.from_rows(rows)


def _exclusions(ctx) -> frozenset:
    p = ctx.path("exclusions")
    if p is None:
        return frozenset()
    return frozenset(
        line.split("#", 1)[0].strip()
        for line in p.read_text(encoding="utf-8").splitlines()
        if line.split("#", 1)[0].strip()
    )


def _options(ctx) -> AnalysisOptions:
    from .tsb import DEFAULT_SCHEDULE, PriceSchedule

    schedule = ctx.path("schedule")
    split = ctx.get("split_date")
    try:
        split = date.fromisoformat(split) if split else None
    except ValueError:
        raise UsageError(f"split_date: {split!r} is not YYYY-MM-DD") from None
    gaps = ctx.get("curve_gaps")
    opts = AnalysisOptions(
        max_rounds=ctx.integer("max_rounds", 10),
        max_gap=ctx.integer("max_gap", 100),
        spike_threshold=ctx.amount("spike_threshold", "5000"),
        exclusions=_exclusions(ctx),
        schedule=PriceSchedule.load(schedule) if schedule else DEFAULT_SCHEDULE,
        deposit_tol=ctx.amount("deposit_tol", "5"),
        cluster_tol=ctx.amount("cluster_tol", "1"),
        activity_limit=ctx.integer("activity_limit", 250),
        split_date=split,
        tsb_window=ctx.get("tsb_window", "calendar"),
    )
    if gaps:
        opts.curve_gaps = tuple(int(g) for g in str(gaps).split(","))
    if opts.max_gap < 1:
        raise UsageError("max_gap must be at least 1")
    return opts


# -- commands ---------------------------------------------------------


def cmd_import(ctx):
    from .ingest import import_dump

    dump = ctx.path("dump", required=True)
    store = ctx.store(create=True)
    try:
        r = import_dump(store, dump, resolve=not ctx.args.no_resolve)
    finally:
        store.close()
    log.warning("imported %d blocks, %d txs; %d inputs resolved, %d unresolvable",
                r.blocks_ingested, r.txs_ingested, r.inputs_resolved, r.inputs_unresolvable)


def cmd_ingest(ctx):
    from .ingest import RpcClient, RpcConfig, sync_from_node

    values = {k: ctx.get(k) for k in ("rpc_url", "rpc_user", "rpc_password") if ctx.get(k)}
    try:
        config = RpcConfig.from_sources(values)
    except ZanonError as exc:
        raise UsageError(str(exc)) from None
    store = ctx.store(create=True)
    try:
        start = ctx.args.from_height
        if start is None:
            start = store.tip_height() + 1
        r = sync_from_node(store, RpcClient(config), start, ctx.args.to_height, ctx.args.workers, ctx.args.batch)
    finally:
        store.close()
    log.warning("ingested %d blocks, %d txs; %d nonstandard outputs; %d inputs unresolvable",
                r.blocks_ingested, r.txs_ingested, r.outputs_unaddressed, r.inputs_unresolvable)


def cmd_resolve(ctx):
    from .ingest import resolve_inputs

    store = ctx.store()
    try:
        r = resolve_inputs(store)
    finally:
        store.close()
    log.warning("%d inputs resolved, %d unresolvable", r.inputs_resolved, r.inputs_unresolvable)


def cmd_stats(ctx):
    from . import stats
    from .model import KIND_ORDER

    view, _ = _view(ctx)
    table = ctx.args.table
    if table == "kinds":
        _emit(ctx, ["kind", "count", "percent"], stats.kind_breakdown(view).rows())
    elif table == "pool":
        s = stats.pool_series(view)
        _emit(ctx, SCHEMAS["pool_series.csv"].split(","), [
            [p.height, p.time, p.deposited, format_zec(p.deposited), p.withdrawn, format_zec(p.withdrawn),
             p.balance, format_zec(p.balance)] for p in s.points])
    elif table == "addresses":
        a = stats.address_stats(view)
        _emit(ctx, ["metric", "value"], [
            ["distinct_t_addresses", a.distinct_t],
            ["shielding_input_addresses", a.ever_shielding_inputs],
            ["deshielding_output_addresses", a.ever_deshielding_outputs]])
    elif table == "wealth":
        w = stats.wealth_distribution(view, ctx.args.height)
        _emit(ctx, ["metric", "value"], [
            ["height", w.height], ["addresses", w.address_count], ["nonzero_addresses", len(w.balances)],
            ["nonzero_percent", fmt_ratio(w.nonzero_fraction, 2)],
            ["top1_percent_share", fmt_ratio(w.top_percent_share(1), 2)],
            ["max_balance_zat", w.max_balance], ["max_balance_zec", format_zec(w.max_balance)]])
    elif table == "zz":
        z = stats.zz_joinsplit_stats(view)
        _emit(ctx, ["metric", "value"], [
            ["private_txs", z.private_tx_count], ["joinsplits", z.joinsplit_count],
            ["single_joinsplit_txs", z.single_js_count],
            ["single_joinsplit_percent", fmt_ratio(z.single_js_fraction, 2)]])
    elif table == "zz-daily":
        z = stats.zz_joinsplit_stats(view)
        _emit(ctx, ["day", "private_txs", "joinsplits"], [[d, n, j] for d, (n, j) in z.per_day.items()])
    elif table == "spikes":
        threshold = ctx.amount("spike_threshold", "5000")
        _emit(ctx, ["height", "direction", "amount_zat", "amount_zec"],
              [[s.height, s.direction, s.amount, format_zec(s.amount)] for s in stats.spike_report(view, threshold)])
    elif table == "daily-kinds":
        _emit(ctx, ["day"] + [k.value for k in KIND_ORDER],
              [[d, *(c[k] for k in KIND_ORDER)] for d, c in stats.daily_kind_counts(view)])
    else:
        _emit(ctx, ["day", *stats.VALUE_CATEGORIES],
              [[d, *(fmt_ratio(f[c], 6, percent=False) for c in stats.VALUE_CATEGORIES)]
               for d, f in stats.daily_value_fractions(view)])


def cmd_cluster(ctx):
    from .cluster import build_clusters

    view, _ = _view(ctx)
    use_change = str(ctx.get("use_change", False)).lower() in ("1", "true", "yes")
    clusters = build_clusters(view, use_change=use_change, exclusions=_exclusions(ctx))
    log.warning("%d clusters, %d with more than one address", len(clusters), clusters.multi_address_count())
    _emit(ctx, ["cluster_id", "size", "member_address"], clusters.rows())


def cmd_tag(ctx):
    from .tags import TagRegistry, derive_miner_tags

    founders = ctx.path("founders")
    tag_files = ctx.args.tags or ([ctx.config["tags"]] if ctx.config.get("tags") else [])
    for f in tag_files:
        if not Path(f).exists():
            raise UsageError(f"tags: {f} does not exist")
    store = ctx.store()
    try:
        registry = TagRegistry.from_rows(store.load_tag_rows(), run_id=f"tip-{store.tip_height()}")
        if founders:
            log.warning("%d founder addresses", registry.load_founder_params(founders))
        for f in tag_files:
            log.warning("%s: %d tags", f, registry.import_tags_csv(f))
        for lineno, reason in registry.rejected:
            log.warning("rejected row %s: %s", lineno, reason)
        if not ctx.args.no_derive_miners:
            view = store.snapshot()
            log.warning("%d miner tags derived from coin generation", derive_miner_tags(view, registry))
        with store.writer():
            added = store.save_tags(registry.rows())
    finally:
        store.close()
    log.warning("%d new tags stored", added)


def cmd_attribute(ctx):
    from . import attribute

    view, registry = _view(ctx)
    res = attribute.run_pipeline(view, registry, ctx.integer("max_rounds", 10),
                                 not ctx.args.no_h3, not ctx.args.no_h4)
    if not res.converged:
        log.warning("no fixpoint after %d rounds", res.rounds)
    for c in res.h3.conflicts + res.h4.conflicts:
        log.warning("conflict: %s", c)
    for a in res.h4.anomalies:
        log.warning("anomaly: %s", a)
    table = ctx.args.table
    if table == "attribution":
        target = ctx.args.output
        if target:
            attribute.write_attribution_csv(view, res, target)
        else:
            _emit(ctx, ["txid", "kind", "category", "value_zat", "round_discovered"], (
                [t.txid, t.kind.value, res.categories[t.txid].value,
                 _pool_value(t), res.rounds_discovered.get(t.txid, 0)]
                for t in view.transactions if t.txid in res.categories))
    elif table == "coverage":
        from .report import coverage_rows

        class _A:
            attribution = res
        _emit(ctx, SCHEMAS["coverage.csv"].split(","), coverage_rows(_A))
    elif table == "founders":
        full = registry.copy()
        for t in res.new_tags:
            full.add(t)
        _emit(ctx, SCHEMAS["founders.csv"].split(","), attribute.founder_report(view, full).csv_rows())
    else:
        _emit(ctx, ["address", "category", "name", "source"],
              [[t.address, t.category.value, t.name, t.source.value] for t in res.new_tags])


def _pool_value(tx):
    from .model import pool_deposit, pool_withdrawal

    return pool_deposit(tx) + pool_withdrawal(tx)


def cmd_link(ctx):
    from . import attribute, link

    view, registry = _view(ctx)
    opts = _options(ctx)
    table = ctx.args.table
    if table == "curve":
        gaps = ctx.args.gaps
        gaps = [int(g) for g in gaps.split(",")] if gaps else list(opts.curve_gaps)
        _emit(ctx, ["gap", "links", "value_zat", "value_zec"],
              [[g, n, v, format_zec(v)] for g, n, v in link.linked_value_curve(view, gaps)])
        return
    trips = link.find_round_trips(view, opts.max_gap)
    log.warning("%d round trips, %s ZEC", len(trips), format_zec(sum(r.value for r in trips)))
    if table == "trips":
        _emit(ctx, SCHEMAS["round_trips.csv"].split(","),
              [[r.value, r.deposit_txid, r.deposit_height, r.withdrawal_txid, r.withdrawal_height, r.gap]
               for r in trips])
    elif table == "uniqueness":
        _emit(ctx, ["decimal_places", "count"], enumerate(link.value_uniqueness_stats(trips).histogram))
    else:
        res = attribute.run_pipeline(view, registry, opts.max_rounds)
        an = link.anonymity_reduction(view, res, trips)
        _emit(ctx, ["metric", "percent"], [
            [name, fmt_ratio(getattr(an, name), 2, percent=False)]
            for name in ("founder_pct", "miner_pct", "founder_miner_pct", "roundtrip_only_pct", "total_pct")])


def cmd_tsb(ctx):
    from . import attribute, tsb
    from .cluster import build_clusters

    view, registry = _view(ctx)
    opts = _options(ctx)
    res = attribute.run_pipeline(view, registry, opts.max_rounds)
    full = registry.copy()
    for t in res.new_tags:
        full.add(t)
    clusters = build_clusters(view, use_change=True, exclusions=opts.exclusions)
    result = tsb.scan(view, clusters, full, opts.schedule, opts.deposit_tol, opts.cluster_tol,
                      opts.activity_limit, opts.split_date, opts.tsb_window, res)
    log.warning("%d flagged clusters", len(result.flagged_clusters()))
    table = ctx.args.table
    if table == "table":
        _emit(ctx, ["period"] + [format_zec(a) for a in result.amounts],
              [[p] + [c[a] for a in result.amounts] for p, c in result.table()])
    elif table == "candidates":
        _emit(ctx, SCHEMAS["tsb_candidates.csv"].split(","),
              [[c.cluster_id, c.period, c.matched_amount, c.cluster_total, c.tx_activity_count,
                " ".join(c.deposit_txids)] for c in result.candidates])
    else:
        rows = []
        for c in result.candidates:
            d = tsb.candidate_detail(view, clusters, full, c, opts.schedule, opts.cluster_tol, opts.split_date)
            rows.append([c.cluster_id, c.period, "yes" if d.repeat_pattern else "no",
                         "; ".join(f"{src}={format_zec(v)}" for src, v in d.funding),
                         "; ".join(f"{p}={format_zec(v)}" for p, v in d.history)])
        _emit(ctx, ["cluster_id", "period", "repeat_pattern", "funding", "history"], rows)


def cmd_synth(ctx):
    from .synth import ScenarioConfig, generate

    values = read_key_values(ctx.args.scenario) if ctx.args.scenario else {}
    for item in ctx.args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = value.strip()
    if ctx.args.seed is not None:
        values["seed"] = str(ctx.args.seed)
    config = ScenarioConfig.from_mapping(values)
    paths = generate(config, ctx.args.out)
    for name, path in paths.items():
        log.warning("wrote %s: %s", name, path)


def cmd_report(ctx):
    view, registry = _view(ctx)
    out = ctx.get("out") or ctx.get("output")
    if not out:
        raise UsageError("--out is required")
    analysis = run_analysis(view, registry, _options(ctx))
    for path in write_bundle(analysis, out):
        log.info("wrote %s", path)
    log.warning("report bundle written to %s", out)


def cmd_check(ctx):
    from .errors import IntegrityError
    from .stats import pool_series

    view, registry = _view(ctx)
    problems = 0
    unresolved = 0
    for tx in view.transactions:
        if any(not i.resolved for i in tx.vin):
            unresolved += 1
            continue
        try:
            conservation_check(tx)
        except DataError as exc:
            problems += 1
            log.error("%s", exc)
    try:
        pool_series(view)
    except IntegrityError as exc:
        problems += 1
        log.error("%s", exc)
    result = {"digest": view.digest(), "tip_height": view.tip_height, "transactions": len(view),
              "violations": problems, "unresolved_txs": unresolved}
    if ctx.args.manifest:
        result["evaluation"] = _evaluate(view, registry, ctx.path("manifest"))
    json.dump(result, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")
    if problems:
        raise DataError(f"{problems} integrity violations")


def _evaluate(view, registry, manifest_path):
    from .synth import evaluate

    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    analysis = run_analysis(view, registry, AnalysisOptions(max_gap=manifest["config"]["round_trip_gap_max"]))
    scores = evaluate({
        "digest": view.digest(),
        "h3_txs": analysis.attribution.h3.txs,
        "h4_txs": analysis.attribution.h4.txs,
        "round_trips": analysis.round_trips,
        "categories": analysis.attribution.categories,
        "clusters": analysis.clusters,
    }, manifest)
    out = {}
    for name, v in scores.items():
        if hasattr(v, "tp"):
            out[name] = {"tp": v.tp, "fp": v.fp, "fn": v.fn,
                         "precision": None if v.precision is None else fmt_ratio(v.precision, 4, percent=False),
                         "recall": None if v.recall is None else fmt_ratio(v.recall, 4, percent=False)}
        elif isinstance(v, bool):
            out[name] = v
        else:
            out[name] = fmt_ratio(v, 4, percent=False)
    return out


COMMANDS = {
    "ingest": cmd_ingest, "import": cmd_import, "resolve": cmd_resolve, "stats": cmd_stats,
    "cluster": cmd_cluster, "tag": cmd_tag, "attribute": cmd_attribute, "link": cmd_link,
    "tsb": cmd_tsb, "synth": cmd_synth, "report": cmd_report, "check": cmd_check,
}


def _setup_logging(verbose):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("zanon: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO if verbose else logging.WARNING)
    log.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _setup_logging(args.verbose)
        if not args.command:
            raise UsageError("a subcommand is required")
        config = {}
        if args.config:
            if not Path(args.config).exists():
                raise UsageError(f"config file {args.config} does not exist")
            config = read_key_values(args.config)
            unknown = set(config) - CONFIG_KEYS
            if unknown:
                raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        COMMANDS[args.command](Context(args, config))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"zanon: error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"zanon: configuration error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ZanonError) as exc:
        print(f"zanon: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
