"""Score analysis results against a generator manifest."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from ..errors import DataError


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> Optional[Fraction]:
        n = self.tp + self.fp
        return Fraction(self.tp, n) if n else None

    @property
    def recall(self) -> Optional[Fraction]:
        n = self.tp + self.fn
        return Fraction(self.tp, n) if n else None


def confusion(predicted: Iterable, truth: Iterable) -> Confusion:
    p, t = set(predicted), set(truth)
    return Confusion(len(p & t), len(p - t), len(t - p))


def cluster_purity(clusters, owner: dict[str, str]) -> Fraction:
    """Share of addresses whose cluster's most common owner is their own owner."""
    agree = total = 0
    for cid in range(len(clusters)):
        members = clusters.members(cid)
        counts = Counter(owner[a] for a in members)
        agree += counts.most_common(1)[0][1]
        total += len(members)
    return Fraction(agree, total) if total else Fraction(1)


def evaluate(results: dict, manifest: dict) -> dict:
    """Per-heuristic confusion counts.

    ``results`` holds ``digest`` (required) and any of ``h3_txs``, ``h4_txs``,
    ``round_trips`` (objects with deposit_txid/withdrawal_txid), ``categories``
    (txid to category string), ``clusters`` and ``tsb_candidates``.
    """
    if results.get("digest") != manifest["digest"]:
        raise DataError("analysed chain does not match the manifest digest")
    out: dict = {}
    truth_cat = manifest["tx_categories"]
    if "h3_txs" in results:
        out["heuristic3"] = confusion(results["h3_txs"], manifest["founder_withdrawal_txids"])
    if "h4_txs" in results:
        out["heuristic4"] = confusion(results["h4_txs"], manifest["pool_payouts"])
    if "round_trips" in results:
        out["heuristic5"] = confusion(
            ((r.deposit_txid, r.withdrawal_txid) for r in results["round_trips"]),
            ((r[1], r[3]) for r in manifest["round_trips"]),
        )
    if "categories" in results:
        cats = {k: str(v) for k, v in results["categories"].items()}
        for category in ("founder", "miner"):
            out[f"attribution_{category}"] = confusion(
                (t for t, c in cats.items() if c == category),
                (t for t, c in truth_cat.items() if c == category),
            )
        out["attribution_exact"] = cats == truth_cat
    if "clusters" in results:
        out["cluster_purity"] = cluster_purity(results["clusters"], manifest["address_owner"])
    if "tsb_candidates" in results:
        clusters = results["tsb_clusters"]
        flagged = {c.cluster_id for c in results["tsb_candidates"]}
        buyers = {clusters.cluster_of(b["addresses"][0]) for b in manifest["tsb_buyers"]}
        out["tsb"] = confusion(flagged, buyers)
    return out
