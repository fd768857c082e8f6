"""Position prediction under the fee-rate norm and ordering-deviation metrics.

Predicted positions order a block's non-CPFP transactions by descending
fee-rate (exact rational comparison), breaking ties by observed order.
Position errors are percentile differences so block size cancels; the
per-transaction signed error is (predicted - observed) percentile, positive
when a transaction sits higher (earlier) in the block than its fee-rate
merits.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from . import _kernels
from .depgraph import cpfp_set
from .errors import NoCTxFound
from .model import Block, ChainData, PercentilePosition


@dataclass(frozen=True)
class PositionStats:
    height: int
    n: int
    ppe: float
    per_tx_sppe: dict[str, float]


@dataclass(frozen=True)
class ViolationStats:
    snapshot_time: int
    epsilon_seconds: int
    pairs_checked: int
    violations: int
    fraction: Fraction

    def __post_init__(self):
        if self.violations > self.pairs_checked:
            raise ValueError("violations cannot exceed pairs checked")


def _observed_noncpfp(block: Block, chain: ChainData) -> list[str]:
    skip = cpfp_set(block, chain)
    return [t for t in block.txids if t not in skip]


def position_errors(block: Block, chain: ChainData) -> tuple[list[str], np.ndarray]:
    """Signed (predicted - observed) percentile error per non-CPFP tx, in
    observed order."""
    txids = _observed_noncpfp(block, chain)
    fee = np.fromiter((chain.txs[t].fee for t in txids), dtype=np.int64,
                      count=len(txids))
    vsize = np.fromiter((chain.txs[t].vsize for t in txids), dtype=np.int64,
                        count=len(txids))
    return txids, _kernels.perc_errors(fee, vsize)


def predict_positions(block: Block, chain: ChainData) -> dict[str, PercentilePosition]:
    """Norm-predicted percentile positions for the block's non-CPFP txs."""
    txids = _observed_noncpfp(block, chain)
    n = len(txids)
    fee = np.fromiter((chain.txs[t].fee for t in txids), dtype=np.int64, count=n)
    vsize = np.fromiter((chain.txs[t].vsize for t in txids), dtype=np.int64,
                        count=n)
    obs = np.arange(n, dtype=np.int64)
    order = _kernels.feerate_order(fee, vsize, obs, obs)
    return {txids[obs_idx]: PercentilePosition.from_rank(pred_pos + 1, n)
            for pred_pos, obs_idx in enumerate(order)}


def ppe(block: Block, chain: ChainData) -> float:
    """Mean absolute percentile error of the block (0 for n <= 1)."""
    _, errs = position_errors(block, chain)
    if len(errs) <= 1:
        return 0.0
    return float(np.mean(np.abs(errs)))


def position_stats(block: Block, chain: ChainData) -> PositionStats:
    txids, errs = position_errors(block, chain)
    n = len(txids)
    mean_abs = float(np.mean(np.abs(errs))) if n > 1 else 0.0
    return PositionStats(height=block.height, n=n, ppe=mean_abs,
                         per_tx_sppe={t: float(e) for t, e in zip(txids, errs)})


def sppe(blocks_of_m: Iterable[Block], c_txs, chain: ChainData) -> float:
    """Mean signed (predicted - observed) percentile error of the c-txs over
    the given blocks. Raises NoCTxFound when no c-tx is scoreable."""
    c_txs = set(c_txs)
    errs = []
    for block in blocks_of_m:
        if not c_txs.intersection(block.txids):
            continue
        txids, block_errs = position_errors(block, chain)
        errs.extend(float(e) for t, e in zip(txids, block_errs) if t in c_txs)
    if not errs:
        raise NoCTxFound("no scoreable c-transaction in the given blocks")
    return float(np.mean(errs))


def violation_pairs(snapshot, chain: ChainData, epsilon_seconds: int = 0,
                    snapshot_time: int = 0,
                    non_cpfp: bool = False) -> ViolationStats:
    """Count norm-violating pairs within a mempool snapshot.

    Checked pairs (i, j): received_i + epsilon < received_j and
    feerate_i > feerate_j (exact). A checked pair is a violation when i was
    committed in a later block than j. Transactions never observed or never
    confirmed are excluded; with non_cpfp=True, transactions that are CPFP
    in their confirmation block are excluded as well.
    """
    members = []
    cpfp_cache: dict[int, set[str]] = {}
    for txid in snapshot:
        tx = chain.txs[txid]
        if tx.received is None:
            continue
        h = chain.confirm_height(txid)
        if h is None:
            continue
        if non_cpfp:
            if h not in cpfp_cache:
                cpfp_cache[h] = cpfp_set(chain.block_at(h), chain)
            if txid in cpfp_cache[h]:
                continue
        members.append((tx.received, tx.fee, tx.vsize, h))
    if members:
        t, fee, vsize, blk = (np.asarray(col, dtype=np.int64)
                              for col in zip(*members))
        checked, violations = _kernels.count_violations(
            t, fee, vsize, blk, int(epsilon_seconds))
    else:
        checked, violations = 0, 0
    frac = Fraction(violations, checked) if checked else Fraction(0)
    return ViolationStats(snapshot_time=snapshot_time,
                          epsilon_seconds=int(epsilon_seconds),
                          pairs_checked=checked, violations=violations,
                          fraction=frac)
