"""Parse line-delimited capture files into ChainData and attribute blocks.

File schemas (all JSON Lines unless noted):

- transactions: ``txid, vsize, fee, received (nullable), parents,
  input_addrs, output_addrs``
- blocks: ``height, hash, observed_at, coinbase_tag, reward_addrs, txids``
- pool config (single JSON document):
  ``{"pools": {"<name>": {"markers": [..]}}}``
- snapshots (optional): ``time, txids``
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .errors import (AmbiguousMarker, DuplicateTxid, EmptyWindow,
                     MalformedRecord)
from .model import (TXID_RE, UNKNOWN_POOL, Block, ChainData, PoolDirectory,
                    Transaction)

_TX_FIELDS = {"txid", "vsize", "fee", "received", "parents", "input_addrs",
              "output_addrs"}
_BLOCK_FIELDS = {"height", "hash", "observed_at", "coinbase_tag",
                 "reward_addrs", "txids"}


def tx_to_record(tx: Transaction) -> dict:
    return {
        "txid": tx.txid,
        "vsize": tx.vsize,
        "fee": tx.fee,
        "received": tx.received,
        "parents": list(tx.parents),
        "input_addrs": list(tx.input_addrs),
        "output_addrs": list(tx.output_addrs),
    }


def tx_from_record(rec: dict) -> Transaction:
    if set(rec) != _TX_FIELDS:
        raise ValueError(f"transaction fields must be exactly {sorted(_TX_FIELDS)}")
    txid = rec["txid"]
    if not isinstance(txid, str) or not TXID_RE.match(txid):
        raise ValueError(f"bad txid {txid!r}")
    received = rec["received"]
    if received is not None and not isinstance(received, int):
        raise ValueError("received must be an integer or null")
    return Transaction(
        txid=txid,
        vsize=int(rec["vsize"]),
        fee=int(rec["fee"]),
        received=received,
        parents=tuple(rec["parents"]),
        input_addrs=tuple(rec["input_addrs"]),
        output_addrs=tuple(rec["output_addrs"]),
    )


def block_to_record(blk: Block) -> dict:
    return {
        "height": blk.height,
        "hash": blk.hash,
        "observed_at": blk.observed_at,
        "coinbase_tag": blk.coinbase_tag,
        "reward_addrs": list(blk.reward_addrs),
        "txids": list(blk.txids),
    }


def block_from_record(rec: dict) -> Block:
    if set(rec) != _BLOCK_FIELDS:
        raise ValueError(f"block fields must be exactly {sorted(_BLOCK_FIELDS)}")
    return Block(
        height=int(rec["height"]),
        hash=rec["hash"],
        observed_at=int(rec["observed_at"]),
        coinbase_tag=rec["coinbase_tag"],
        reward_addrs=tuple(rec["reward_addrs"]),
        txids=tuple(rec["txids"]),
    )


def _iter_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield line_no, json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(path, line_no, f"invalid JSON: {exc}") from exc


def parse_transactions(path) -> dict[str, Transaction]:
    txs: dict[str, Transaction] = {}
    for line_no, rec in _iter_jsonl(path):
        try:
            tx = tx_from_record(rec)
        except (ValueError, TypeError, KeyError) as exc:
            raise MalformedRecord(path, line_no, str(exc)) from exc
        if tx.txid in txs:
            raise DuplicateTxid(f"{path}:{line_no}: duplicate txid {tx.txid}")
        txs[tx.txid] = tx
    return txs


def parse_blocks(path) -> list[Block]:
    blocks = []
    for line_no, rec in _iter_jsonl(path):
        try:
            blocks.append(block_from_record(rec))
        except (ValueError, TypeError, KeyError) as exc:
            raise MalformedRecord(path, line_no, str(exc)) from exc
    return blocks


def load_pool_directory(path) -> PoolDirectory:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    pools = doc.get("pools")
    if not isinstance(pools, dict):
        raise MalformedRecord(path, 1, "pool config must contain a 'pools' map")
    markers = {name: tuple(spec.get("markers", ())) for name, spec in pools.items()}
    return PoolDirectory(markers=markers)


def write_transactions(path, txs: Iterable[Transaction]):
    with open(path, "w", encoding="utf-8") as fh:
        for tx in txs:
            fh.write(json.dumps(tx_to_record(tx), sort_keys=True) + "\n")


def write_blocks(path, blocks: Iterable[Block]):
    with open(path, "w", encoding="utf-8") as fh:
        for blk in blocks:
            fh.write(json.dumps(block_to_record(blk), sort_keys=True) + "\n")


def write_pool_config(path, markers: dict[str, Iterable[str]]):
    doc = {"pools": {name: {"markers": list(subs)} for name, subs in
                     sorted(markers.items())}}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def attribute_pools(chain: ChainData, directory: PoolDirectory) -> dict[int, str]:
    """Assign each block the unique pool whose marker substring occurs in its
    coinbase tag ("unknown" when none match); grows ``directory.wallets`` with
    the observed reward addresses. Idempotent and block-order independent."""
    if not directory.markers:
        raise AmbiguousMarker("pool directory has no markers configured")
    out: dict[int, str] = {}
    for blk in chain.blocks:
        matches = sorted({pool for pool, subs in directory.markers.items()
                          if any(sub in blk.coinbase_tag for sub in subs)})
        if len(matches) > 1:
            raise AmbiguousMarker(
                f"coinbase tag {blk.coinbase_tag!r} at height {blk.height} "
                f"matches pools {matches}")
        pool = matches[0] if matches else UNKNOWN_POOL
        out[blk.height] = pool
        directory.wallets.setdefault(pool, set()).update(blk.reward_addrs)
    return out


def parse_chain(tx_path, block_path, pool_config=None,
                pool_dir: Optional[PoolDirectory] = None) -> ChainData:
    """Parse capture files into a fully indexed ChainData.

    Unresolvable block txids are collected and reported via DanglingTxid.
    When a pool config (or directory) is given, blocks are attributed and
    ``chain.pool_of`` is filled.
    """
    txs = parse_transactions(tx_path)
    blocks = parse_blocks(block_path)
    chain = ChainData(blocks, txs)
    if pool_dir is None and pool_config is not None:
        pool_dir = load_pool_directory(pool_config)
    if pool_dir is not None:
        chain.pool_of.update(attribute_pools(chain, pool_dir))
    return chain


def hash_rate(chain: ChainData, pool: str, window: tuple[int, int]) -> float:
    """Fraction of blocks in the (inclusive) height window mined by ``pool``,
    computed as an exact rational and reported as a float."""
    lo, hi = window
    blocks = chain.blocks_in(lo, hi)
    if not blocks:
        raise EmptyWindow(f"no blocks in heights [{lo}, {hi}]")
    mined = sum(1 for b in blocks if chain.pool_of.get(b.height) == pool)
    return float(Fraction(mined, len(blocks)))


@dataclass(frozen=True)
class SnapshotSeries:
    """Mempool snapshots, either explicit (from a capture file) or derived
    on demand from arrival/confirmation times.

    Derived content at time t: transactions with received <= t and not yet
    in any block with observed_at <= t.
    """

    mode: str = "derived"
    explicit_snapshots: Optional[tuple[tuple[int, frozenset[str]], ...]] = None

    def __post_init__(self):
        if self.mode not in ("derived", "explicit"):
            raise ValueError(f"bad snapshot mode {self.mode!r}")
        if self.mode == "explicit":
            snaps = self.explicit_snapshots or ()
            times = [t for t, _ in snaps]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("explicit snapshot times must strictly increase")

    def snapshot(self, chain: ChainData, t: int) -> frozenset[str]:
        if self.mode == "explicit":
            best = None
            for time, txids in self.explicit_snapshots or ():
                if time <= t:
                    best = txids
                else:
                    break
            return best if best is not None else frozenset()
        obs_at = {}
        for blk in chain.blocks:
            obs_at[blk.height] = blk.observed_at
        out = set()
        for txid, tx in chain.txs.items():
            if tx.received is None or tx.received > t:
                continue
            h = chain.confirm_height(txid)
            if h is not None and obs_at[h] <= t:
                continue
            out.add(txid)
        return frozenset(out)

    def span(self, chain: ChainData) -> tuple[int, int]:
        """Sampleable time range: explicit snapshot times, or the observation
        window from first arrival to last block."""
        if self.mode == "explicit" and self.explicit_snapshots:
            return (self.explicit_snapshots[0][0], self.explicit_snapshots[-1][0])
        received = [tx.received for tx in chain.txs.values()
                    if tx.received is not None]
        lo = min(received) if received else 0
        hi = max((b.observed_at for b in chain.blocks), default=lo)
        return lo, max(lo, hi)


def parse_snapshots(path) -> SnapshotSeries:
    snaps = []
    for line_no, rec in _iter_jsonl(path):
        try:
            snaps.append((int(rec["time"]), frozenset(rec["txids"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(path, line_no, str(exc)) from exc
    snaps.sort(key=lambda p: p[0])
    return SnapshotSeries(mode="explicit", explicit_snapshots=tuple(snaps))
