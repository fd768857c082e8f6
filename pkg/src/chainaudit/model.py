"""Canonical domain types and unit conventions.

Units used everywhere: fees in integer satoshi, sizes in virtual bytes,
fee-rates in satoshi per virtual byte (exact rationals), times in integer
unix seconds. Within-block order is the order of ``Block.txids``; the
coinbase transaction is excluded from ``txids`` and from every position
metric.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import total_ordering
from typing import Iterable, Optional

from .errors import AmbiguousMarker, DanglingTxid, DuplicateTxid

TXID_RE = re.compile(r"^[0-9a-f]{64}$")

#: Reserved pool name for blocks whose coinbase tag matches no marker.
UNKNOWN_POOL = "unknown"


@total_ordering
@dataclass(frozen=True, slots=True)
class FeeRate:
    """Fee per virtual byte as an exact rational.

    Ordering is exact (cross-multiplied integers under the hood via
    Fraction); never compare fee-rates through float division.
    """

    value: Fraction

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("fee-rate must be non-negative")

    @classmethod
    def of(cls, fee: int, vsize: int) -> "FeeRate":
        return cls(Fraction(fee, vsize))

    def __lt__(self, other):
        if isinstance(other, FeeRate):
            return self.value < other.value
        return self.value < other

    def __eq__(self, other):
        if isinstance(other, FeeRate):
            return self.value == other.value
        return self.value == other

    def __hash__(self):
        return hash(self.value)

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True, slots=True)
class Transaction:
    """A user transaction; ``received`` is the local observation time and is
    None for transactions never seen in the observer's mempool."""

    txid: str
    vsize: int
    fee: int
    received: Optional[int] = None
    parents: tuple[str, ...] = ()
    input_addrs: tuple[str, ...] = ()
    output_addrs: tuple[str, ...] = ()

    def __post_init__(self):
        if self.vsize < 1:
            raise ValueError(f"{self.txid}: vsize must be >= 1")
        if self.fee < 0:
            raise ValueError(f"{self.txid}: fee must be >= 0")
        if self.txid in self.parents:
            raise ValueError(f"{self.txid}: transaction cannot be its own parent")

    @property
    def feerate(self) -> FeeRate:
        return FeeRate.of(self.fee, self.vsize)


@dataclass(frozen=True, slots=True)
class Block:
    """A mined block. ``observed_at`` is the local observer receipt time
    (not the miner-set header time); ``txids`` excludes the coinbase and is
    ordered by within-block position."""

    height: int
    hash: str
    observed_at: int
    coinbase_tag: str
    reward_addrs: tuple[str, ...]
    txids: tuple[str, ...]

    def __post_init__(self):
        if self.height < 0:
            raise ValueError("height must be non-negative")


@dataclass(frozen=True, slots=True)
class PercentilePosition:
    """Within-block position as a percentile rank in [0, 100]."""

    rank: int
    n: int
    percentile: float

    def __post_init__(self):
        if not 1 <= self.rank <= self.n:
            raise ValueError(f"rank {self.rank} outside [1, {self.n}]")

    @classmethod
    def from_rank(cls, rank: int, n: int) -> "PercentilePosition":
        pct = 0.0 if n <= 1 else (rank - 1) * 100.0 / (n - 1)
        return cls(rank=rank, n=n, percentile=pct)


def percentile_of(rank: int, n: int) -> float:
    return 0.0 if n <= 1 else (rank - 1) * 100.0 / (n - 1)


@dataclass(slots=True)
class PoolDirectory:
    """Maps coinbase-tag marker substrings to pool names; ``wallets`` is
    grown during block attribution with the observed reward addresses."""

    markers: dict[str, tuple[str, ...]]
    wallets: dict[str, set[str]] = field(default_factory=dict)

    def __post_init__(self):
        if UNKNOWN_POOL in self.markers:
            raise AmbiguousMarker(f"'{UNKNOWN_POOL}' is a reserved pool name")
        seen: dict[str, str] = {}
        for pool, subs in self.markers.items():
            self.markers[pool] = tuple(subs)
            for sub in subs:
                if sub in seen and seen[sub] != pool:
                    raise AmbiguousMarker(
                        f"marker {sub!r} maps to both {seen[sub]!r} and {pool!r}")
                seen[sub] = pool
        for pool in self.markers:
            self.wallets.setdefault(pool, set())

    def pool_names(self) -> list[str]:
        return sorted(self.markers)


class ChainData:
    """Indexed, immutable-after-construction store of blocks and transactions.

    Construction validates the cross-references: every block txid must
    resolve, heights must strictly increase, and a txid may be confirmed in
    at most one block.
    """

    __slots__ = ("blocks", "txs", "pool_of", "confirmed_in", "_by_height")

    def __init__(self, blocks: Iterable[Block], txs: dict[str, Transaction],
                 pool_of: Optional[dict[int, str]] = None):
        self.blocks: list[Block] = sorted(blocks, key=lambda b: b.height)
        self.txs = txs
        self.pool_of: dict[int, str] = dict(pool_of or {})
        self.confirmed_in: dict[str, int] = {}
        self._by_height: dict[int, Block] = {}
        prev = None
        missing = set()
        for blk in self.blocks:
            if prev is not None and blk.height <= prev:
                raise ValueError(f"block heights must strictly increase "
                                 f"({blk.height} after {prev})")
            prev = blk.height
            self._by_height[blk.height] = blk
            seen_in_block = set()
            for txid in blk.txids:
                if txid in seen_in_block:
                    raise DuplicateTxid(f"{txid} appears twice in block {blk.height}")
                seen_in_block.add(txid)
                if txid in self.confirmed_in:
                    raise DuplicateTxid(
                        f"{txid} confirmed in blocks {self.confirmed_in[txid]} "
                        f"and {blk.height}")
                if txid not in txs:
                    missing.add(txid)
                else:
                    self.confirmed_in[txid] = blk.height
        if missing:
            raise DanglingTxid(missing)

    def block_at(self, height: int) -> Block:
        return self._by_height[height]

    def has_height(self, height: int) -> bool:
        return height in self._by_height

    def blocks_in(self, lo: int, hi: int) -> list[Block]:
        """Blocks with lo <= height <= hi (inclusive window)."""
        return [b for b in self.blocks if lo <= b.height <= hi]

    def confirm_height(self, txid: str) -> Optional[int]:
        return self.confirmed_in.get(txid)

    def height_span(self) -> tuple[int, int]:
        if not self.blocks:
            raise ValueError("empty chain")
        return self.blocks[0].height, self.blocks[-1].height

    def __eq__(self, other):
        if not isinstance(other, ChainData):
            return NotImplemented
        return (self.blocks == other.blocks and self.txs == other.txs
                and self.pool_of == other.pool_of)
