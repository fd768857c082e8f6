"""End-to-end audits over an ingested chain.

Covers self-interest transaction discovery, differential tests over
arbitrary transaction sets, dark-fee flagging by per-transaction signed
position error, the low-fee-threshold norm scan, mempool congestion and
fee/delay analyses, and miners' fee-revenue share.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .baseline import cdf_points
from .errors import UnknownPool
from .ingest import SnapshotSeries
from .model import ChainData, PoolDirectory
from .ordering import position_errors
from .stats import DiffTestResult, run_diff_test

#: Per-transaction fee-rate bands in sat/vB: low, high, exorbitant.
FEE_CLASSES = (("low", None, 10), ("high", 10, 100), ("exorbitant", 100, None))

DARKFEE_THRESHOLDS = (100, 99, 90, 50, 1)


def self_interest_txs(chain: ChainData, directory: PoolDirectory,
                      pool: str, mode: str = "both") -> set[str]:
    """Transactions whose inputs or outputs touch the pool's reward wallets.

    mode selects the matching side: "spend" (inputs only), "receive"
    (outputs only), or "both". Coinbase transactions never appear (they are
    not part of the tx store).
    """
    if mode not in ("both", "spend", "receive"):
        raise ValueError(f"bad mode {mode!r}")
    if pool not in directory.wallets and pool not in directory.markers:
        raise UnknownPool(pool)
    wallets = directory.wallets.get(pool, set())
    if not wallets:
        return set()
    out = set()
    for txid, tx in chain.txs.items():
        spend = any(a in wallets for a in tx.input_addrs)
        receive = any(a in wallets for a in tx.output_addrs)
        if (mode == "both" and (spend or receive)) or \
                (mode == "spend" and spend) or (mode == "receive" and receive):
            out.add(txid)
    return out


def audit_tx_set(chain: ChainData, c_txs: Iterable[str], pools: Sequence[str],
                 window: tuple[int, int], alpha: float = 0.01
                 ) -> list[DiffTestResult]:
    """One differential test per pool, ordered by descending hash rate."""
    c_txs = set(c_txs)
    results = [run_diff_test(chain, pool, c_txs, window, alpha=alpha)
               for pool in pools]
    results.sort(key=lambda r: (-r.theta0, r.pool))
    return results


def darkfee_flags(chain: ChainData, pool: str,
                  thresholds: Sequence[float] = DARKFEE_THRESHOLDS
                  ) -> dict[float, list[str]]:
    """Bucket the pool's transactions by per-tx signed position error.

    A transaction lands in bucket t when its (predicted - observed)
    percentile error is >= t; buckets therefore nest as t decreases.
    """
    errs: list[tuple[str, float]] = []
    for block in chain.blocks:
        if chain.pool_of.get(block.height) != pool:
            continue
        txids, block_errs = position_errors(block, chain)
        errs.extend(zip(txids, block_errs))
    out: dict[float, list[str]] = {}
    for t in thresholds:
        out[t] = sorted(txid for txid, e in errs if e >= t)
    return out


@dataclass(frozen=True)
class LowFeeScan:
    threshold: Fraction
    per_pool: dict[str, int]
    confirmed_total: int
    observed_total: int

    @property
    def confirmed_fraction(self) -> float:
        if self.observed_total == 0:
            return 0.0
        return self.confirmed_total / self.observed_total


def low_fee_scan(chain: ChainData, threshold=1) -> LowFeeScan:
    """Count confirmed transactions below the fee-rate threshold, per pool,
    plus the global confirmed fraction among all known sub-threshold txs."""
    thr = Fraction(threshold)
    per_pool: dict[str, int] = {}
    confirmed = 0
    observed = 0
    for txid, tx in chain.txs.items():
        if tx.fee * thr.denominator >= tx.vsize * thr.numerator:
            continue
        observed += 1
        h = chain.confirm_height(txid)
        if h is None:
            continue
        confirmed += 1
        pool = chain.pool_of.get(h, "unknown")
        per_pool[pool] = per_pool.get(pool, 0) + 1
    return LowFeeScan(threshold=thr, per_pool=per_pool,
                      confirmed_total=confirmed, observed_total=observed)


@dataclass(frozen=True)
class CongestionReport:
    interval: int
    cap_vbytes: int
    series: list[tuple[int, int]]                 # (time, mempool vbytes)
    congested_fraction: float
    bin_labels: tuple[str, ...]
    bin_feerate_cdfs: dict[str, list[tuple[float, float]]]
    class_delay_cdfs_seconds: dict[str, list[tuple[float, float]]]
    class_delay_cdfs_blocks: dict[str, list[tuple[float, float]]]


def _fee_class(fee: int, vsize: int) -> str:
    for name, lo, hi in FEE_CLASSES:
        if (lo is None or fee >= lo * vsize) and (hi is None or fee < hi * vsize):
            return name
    raise AssertionError("unreachable")


def congestion_report(chain: ChainData,
                      snapshots: Optional[SnapshotSeries] = None,
                      interval: int = 15,
                      cap_vbytes: int = 1_000_000) -> CongestionReport:
    """Mempool backlog series, congestion duty cycle, per-congestion-bin
    fee-rate CDFs, and per-fee-class commit-delay CDFs.

    Congestion bins scale with the capacity constant: no congestion
    (<= cap), (cap, 2 cap], (2 cap, 4 cap], > 4 cap.
    """
    obs_of = {b.height: b.observed_at for b in chain.blocks}
    # (time, delta) events; at equal times departures precede arrivals
    events: list[tuple[int, int, int]] = []
    arrivals: list[tuple[int, str]] = []
    for txid, tx in chain.txs.items():
        if tx.received is None:
            continue
        h = chain.confirm_height(txid)
        if h is not None and obs_of[h] <= tx.received:
            continue  # observed only after its block; no mempool residence
        arrivals.append((tx.received, txid))
        events.append((tx.received, 1, tx.vsize))
        if h is not None:
            events.append((obs_of[h], 0, -tx.vsize))
    events.sort(key=lambda e: (e[0], e[1]))
    arrivals.sort()

    if snapshots is None:
        snapshots = SnapshotSeries()
    lo, hi = snapshots.span(chain)
    sample_times = list(range(lo, hi + 1, max(1, interval)))
    series: list[tuple[int, int]] = []
    backlog_at_arrival: dict[str, int] = {}
    if snapshots.mode == "explicit":
        # explicit captures override the derived reconstruction
        for t in sample_times:
            snap = snapshots.snapshot(chain, t)
            series.append((t, sum(chain.txs[x].vsize for x in snap
                                  if x in chain.txs)))
        times = [t for t, _ in series]
        for recv, txid in arrivals:
            idx = bisect_left(times, recv + 1) - 1
            backlog_at_arrival[txid] = series[idx][1] if idx >= 0 else 0
    else:
        level = 0
        ei = 0
        for t in sample_times:
            while ei < len(events) and events[ei][0] <= t:
                level += events[ei][2]
                ei += 1
            series.append((t, level))
        # backlog each arrival sees: departures of the same second drain
        # first, then same-second arrivals stack in txid order
        per_time: dict[int, list[str]] = {}
        for t, txid in arrivals:
            per_time.setdefault(t, []).append(txid)
        level = 0
        for t, kind, delta in events:
            if kind == 0:
                level += delta
                continue
            group = per_time.pop(t, None)
            if group is None:
                continue  # same-second group already handled
            for txid in sorted(group):
                backlog_at_arrival[txid] = level
                level += chain.txs[txid].vsize
    congested = (sum(1 for _, v in series if v > cap_vbytes) / len(series)
                 if series else 0.0)

    edges = (cap_vbytes, 2 * cap_vbytes, 4 * cap_vbytes)
    labels = ("none", "low", "mid", "high")

    def bin_of(v: int) -> str:
        if v <= edges[0]:
            return labels[0]
        if v <= edges[1]:
            return labels[1]
        if v <= edges[2]:
            return labels[2]
        return labels[3]

    bin_rates: dict[str, list[float]] = {b: [] for b in labels}
    class_delay_s: dict[str, list[int]] = {name: [] for name, *_ in FEE_CLASSES}
    class_delay_b: dict[str, list[int]] = {name: [] for name, *_ in FEE_CLASSES}
    heights_sorted = [b.height for b in chain.blocks]
    obs_sorted = [b.observed_at for b in chain.blocks]
    for txid, backlog in backlog_at_arrival.items():
        tx = chain.txs[txid]
        bin_rates[bin_of(backlog)].append(tx.fee / tx.vsize)
        h = chain.confirm_height(txid)
        if h is None:
            continue
        cls = _fee_class(tx.fee, tx.vsize)
        class_delay_s[cls].append(obs_of[h] - tx.received)
        first_idx = bisect_left(obs_sorted, tx.received)
        if first_idx < len(heights_sorted):
            class_delay_b[cls].append(h - heights_sorted[first_idx])
    return CongestionReport(
        interval=interval, cap_vbytes=cap_vbytes, series=series,
        congested_fraction=congested, bin_labels=labels,
        bin_feerate_cdfs={b: cdf_points(v) for b, v in bin_rates.items()},
        class_delay_cdfs_seconds={c: cdf_points(v)
                                  for c, v in class_delay_s.items()},
        class_delay_cdfs_blocks={c: cdf_points(v)
                                 for c, v in class_delay_b.items()})


def subsidy(height: int) -> int:
    """Block subsidy in satoshi under the 210000-block halving schedule."""
    return 5_000_000_000 >> (height // 210_000)


@dataclass(frozen=True)
class FeeRevenueShare:
    per_block: list[tuple[int, float]]  # (height, percent)
    aggregate_percent: float


def fee_revenue_share(chain: ChainData, window: tuple[int, int]
                      ) -> FeeRevenueShare:
    """Transaction fees as a percentage of total miner revenue."""
    lo, hi = window
    per_block = []
    fees_sum = 0
    revenue_sum = 0
    for block in chain.blocks_in(lo, hi):
        fees = sum(chain.txs[t].fee for t in block.txids)
        sub = subsidy(block.height)
        per_block.append((block.height, 100.0 * fees / (fees + sub)))
        fees_sum += fees
        revenue_sum += fees + sub
    agg = 100.0 * fees_sum / revenue_sum if revenue_sum else 0.0
    return FeeRevenueShare(per_block=per_block, aggregate_percent=agg)
