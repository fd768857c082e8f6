"""Norm-implied baseline blocks, overlap reports, and observability analyses.

For every mined block, the candidate set holds the transactions the miner
presumably had available (observed before the block, still unconfirmed,
in-set dependents stripped). The baseline block greedily fills the actual
block's non-CPFP virtual size by descending fee-rate with skip-and-continue;
ties break by earlier arrival, then lexicographic txid. Comparisons exclude
CPFP transactions on both sides.
"""

from __future__ import annotations

import os
from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels
from .depgraph import cpfp_set, strip_dependents
from .errors import InsufficientHistory
from .model import ChainData


@dataclass(frozen=True)
class CandidateSet:
    block_height: int
    txids: frozenset[str]


@dataclass(frozen=True)
class BaselineReport:
    height: int
    baseline: tuple[str, ...]
    overlap_ratio: float
    byte_overlap_ratio: float
    both: frozenset[str]
    only_actual: frozenset[str]
    only_baseline: frozenset[str]
    only_actual_unobserved: frozenset[str]
    actual_count: int
    capacity_vbytes: int


def candidate_set(chain: ChainData, height: int) -> CandidateSet:
    """Transactions observed before the block and unconfirmed at it, with
    in-set dependents stripped and the block's own CPFP txs excluded."""
    block = chain.block_at(height)
    obs = block.observed_at
    raw = set()
    for txid, tx in chain.txs.items():
        if tx.received is None or tx.received >= obs:
            continue
        h = chain.confirm_height(txid)
        if h is not None and h < height:
            continue
        raw.add(txid)
    kept = strip_dependents(raw, chain) - cpfp_set(block, chain)
    return CandidateSet(block_height=height, txids=frozenset(kept))


def assemble_baseline(cands: CandidateSet, capacity_vbytes: int,
                      chain: ChainData) -> list[str]:
    """Greedy skip-and-continue fill of the candidate set by descending
    fee-rate (ties: earlier received, then lexicographic txid)."""
    txids = sorted(cands.txids)
    n = len(txids)
    if n == 0 or capacity_vbytes <= 0:
        return []
    fee = np.fromiter((chain.txs[t].fee for t in txids), dtype=np.int64, count=n)
    vsize = np.fromiter((chain.txs[t].vsize for t in txids), dtype=np.int64,
                        count=n)
    recv = np.fromiter((chain.txs[t].received for t in txids), dtype=np.int64,
                       count=n)
    tie = np.arange(n, dtype=np.int64)  # txids sorted, index = lex rank
    parent = np.full(n, -1, dtype=np.int64)
    sel = _kernels.greedy_fill(fee, vsize, recv, tie, parent, capacity_vbytes)
    return [txids[i] for i in sel]


def _report_from_parts(chain: ChainData, height: int,
                       cands: CandidateSet) -> BaselineReport:
    block = chain.block_at(height)
    cpfp = cpfp_set(block, chain)
    actual_cmp = [t for t in block.txids if t not in cpfp]
    capacity = sum(chain.txs[t].vsize for t in actual_cmp)
    baseline = assemble_baseline(cands, capacity, chain)
    actual = set(actual_cmp)
    base = set(baseline)
    both = actual & base
    only_actual = actual - base
    only_baseline = base - actual
    unobserved = frozenset(t for t in only_actual
                           if chain.txs[t].received is None)
    if actual_cmp:
        overlap = len(both) / len(actual_cmp)
        byte_overlap = (sum(chain.txs[t].vsize for t in both) / capacity
                        if capacity else 1.0)
    else:
        overlap = 1.0
        byte_overlap = 1.0
    return BaselineReport(height=height, baseline=tuple(baseline),
                          overlap_ratio=overlap,
                          byte_overlap_ratio=byte_overlap,
                          both=frozenset(both),
                          only_actual=frozenset(only_actual),
                          only_baseline=frozenset(only_baseline),
                          only_actual_unobserved=unobserved,
                          actual_count=len(actual_cmp),
                          capacity_vbytes=capacity)


def baseline_report(chain: ChainData, height: int,
                    cands: Optional[CandidateSet] = None) -> BaselineReport:
    if cands is None:
        cands = candidate_set(chain, height)
    return _report_from_parts(chain, height, cands)


def _sweep_reports(chain: ChainData, heights: Sequence[int]) -> list[BaselineReport]:
    """Incremental candidate-set sweep over consecutive heights (equivalent
    to calling candidate_set per height, but O(T + sum candidate sizes))."""
    if not len(heights):
        return []
    heights = sorted(heights)
    arrivals = sorted(((tx.received, txid) for txid, tx in chain.txs.items()
                       if tx.received is not None), key=lambda p: (p[0], p[1]))
    arr_times = [a for a, _ in arrivals]
    start = heights[0]
    active = set()
    ptr = 0
    out = []
    all_heights = [b.height for b in chain.blocks]
    from_idx = bisect_left(all_heights, start)
    # replay confirmations before the first requested height
    first_obs = chain.block_at(start).observed_at
    ptr = bisect_left(arr_times, first_obs)
    for _, txid in arrivals[:ptr]:
        h = chain.confirm_height(txid)
        if h is None or h >= start:
            active.add(txid)
    want = set(heights)
    for block in chain.blocks[from_idx:]:
        if block.height > heights[-1]:
            break
        obs = block.observed_at
        while ptr < len(arrivals) and arr_times[ptr] < obs:
            _, txid = arrivals[ptr]
            h = chain.confirm_height(txid)
            if h is None or h >= block.height:
                active.add(txid)
            ptr += 1
        if block.height in want:
            kept = strip_dependents(active, chain) - cpfp_set(block, chain)
            cands = CandidateSet(block_height=block.height,
                                 txids=frozenset(kept))
            out.append(_report_from_parts(chain, block.height, cands))
        active.difference_update(block.txids)
    return out


_FORK_CHAIN: Optional[ChainData] = None


def _fork_worker(heights):
    return _sweep_reports(_FORK_CHAIN, heights)


def baseline_reports(chain: ChainData, heights: Optional[Sequence[int]] = None,
                     jobs: int = 1) -> list[BaselineReport]:
    """Reports for the given heights (default: all blocks), in height order.

    jobs > 1 shards the heights across forked workers; output is identical
    to the serial path.
    """
    if heights is None:
        heights = [b.height for b in chain.blocks]
    heights = sorted(heights)
    if jobs <= 1 or len(heights) < 4 or not hasattr(os, "fork"):
        return _sweep_reports(chain, heights)
    import multiprocessing as mp

    global _FORK_CHAIN
    chunks = [list(c) for c in np.array_split(heights, jobs) if len(c)]
    _FORK_CHAIN = chain
    try:
        ctx = mp.get_context("fork")
        with ctx.Pool(processes=len(chunks)) as pool:
            parts = pool.map(_fork_worker, chunks)
    finally:
        _FORK_CHAIN = None
    return [rep for part in parts for rep in part]


def never_observed_fraction(report: BaselineReport) -> float:
    """Fraction of only-actual transactions the observer never saw."""
    if not report.only_actual:
        return 0.0
    return len(report.only_actual_unobserved) / len(report.only_actual)


def high_fee_missed_fraction(report: BaselineReport, chain: ChainData) -> float:
    """Fraction of only-baseline txs whose fee-rate beats the minimum
    fee-rate in the actual block's non-CPFP txs."""
    if not report.only_baseline:
        return 0.0
    actual_cmp = report.both | report.only_actual
    if not actual_cmp:
        return 0.0
    min_rate = min(Fraction(chain.txs[t].fee, chain.txs[t].vsize)
                   for t in actual_cmp)
    hits = sum(1 for t in report.only_baseline
               if Fraction(chain.txs[t].fee, chain.txs[t].vsize) > min_rate)
    return hits / len(report.only_baseline)


def ignored_after_cutoff(report: BaselineReport, chain: ChainData,
                         policy: tuple[str, int]) -> float:
    """Ignored-transaction fraction after dropping only-baseline txs the
    miner plausibly had not seen yet.

    policy ("time", k): drop txs received within the k seconds up to the
    block. policy ("blocks", k): drop txs received after block i-k was
    observed. Returns |remaining| / |actual non-CPFP txs|.
    """
    kind, k = policy
    if k < 0:
        raise ValueError("cutoff must be non-negative")
    block = chain.block_at(report.height)
    if kind == "time":
        cutoff = block.observed_at - k
    elif kind == "blocks":
        positions = {b.height: i for i, b in enumerate(chain.blocks)}
        idx = positions[report.height] - k
        if idx < 0:
            raise InsufficientHistory(
                f"no block {k} back from height {report.height}")
        cutoff = chain.blocks[idx].observed_at
    else:
        raise ValueError(f"unknown cutoff policy {kind!r}")
    if report.actual_count == 0:
        return 0.0
    remaining = sum(1 for t in report.only_baseline
                    if chain.txs[t].received is not None
                    and chain.txs[t].received <= cutoff)
    return remaining / report.actual_count


_CATEGORIES = ("both", "only_actual", "only_baseline")


@dataclass(frozen=True)
class CategoryDistributions:
    """Per-category commit delays (seconds) and fee-rates for the three
    baseline-comparison categories."""

    delays: dict[str, list[int]]
    feerates: dict[str, list[float]]


def category_delay_feerate(chain: ChainData,
                           heights: Optional[Sequence[int]] = None,
                           reports: Optional[Iterable[BaselineReport]] = None
                           ) -> CategoryDistributions:
    """Delay is (containing block's observed_at - received); only-baseline
    txs are measured against the same height's block. Never-observed txs
    carry no delay and are skipped."""
    if reports is None:
        reports = baseline_reports(chain, heights)
    delays = {c: [] for c in _CATEGORIES}
    feerates = {c: [] for c in _CATEGORIES}
    for rep in reports:
        obs = chain.block_at(rep.height).observed_at
        for cat in _CATEGORIES:
            for txid in sorted(getattr(rep, cat)):
                tx = chain.txs[txid]
                if tx.received is None:
                    continue
                delays[cat].append(obs - tx.received)
                feerates[cat].append(tx.fee / tx.vsize)
    return CategoryDistributions(delays=delays, feerates=feerates)


def cdf_points(values) -> list[tuple[float, float]]:
    """Empirical CDF as (value, cumulative_fraction) points."""
    vals = sorted(values)
    n = len(vals)
    return [(v, (i + 1) / n) for i, v in enumerate(vals)]
