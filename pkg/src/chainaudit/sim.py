"""Deterministic synthetic-chain generator with labeled ground truth.

Arrivals are Poisson, block intervals exponential, miners sampled by hash
rate, and block assembly follows the fee-rate norm (greedy descending
fee-per-vbyte with skip-and-continue, a child selectable only once its
in-mempool parent is taken, fee-rates below 1 sat/vB never picked). All
stochastic draws come from one seeded stream, ordered by event time, so a
given (seed, config) pair reproduces bit-identically.

Timestamps are integer seconds and a miner at time t sees transactions with
arrival < t - observer_lag; blocks are observed instantly. With zero lag
the recorded ground-truth mempools therefore match the candidate-set
reconstruction exactly.

Deviations model the audited misbehaviors:

- ``self_interest_accel``: tagged low-fee txs touch the pool's wallet; a
  configurable fraction is submitted privately and front-placed in the
  pool's own next block.
- ``darkfee_accel``: the pool front-places freshly created txs whose public
  fee-rate is far below 1 sat/vB.
- ``random_substitution``: miners swap a fraction of the norm-chosen txs
  for random pending ones, in place.
- ``decelerate_set``: the pool never includes tagged txs.
- ``low_fee_include``: the pool commits pending sub-threshold txs.
"""

from __future__ import annotations

import json
import math
import os
import random
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .baseline import candidate_set
from .depgraph import cpfp_set, strip_dependents
from .errors import ConfigError, MismatchFound
from .ingest import (attribute_pools, write_blocks, write_pool_config,
                     write_transactions)
from .model import Block, ChainData, PoolDirectory, Transaction

_KINDS = ("self_interest_accel", "darkfee_accel", "random_substitution",
          "decelerate_set", "low_fee_include")


@dataclass
class DeviationSpec:
    kind: str
    pool: Optional[str] = None
    count: int = 0              # tagged/injected tx budget
    rate: float = 0.0           # per-block intensity (random_substitution)
    own_block_prob: float = 1.0  # self_interest_accel: private-submit prob
    per_block_cap: int = 1      # darkfee_accel / low_fee_include per block
    min_block_txs: int = 0      # darkfee_accel: only inject into full blocks
    feerate_lo: float = 1.0     # tagged-tx public fee-rate range (sat/vB)
    feerate_hi: float = 2.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown deviation kind {self.kind!r}")
        if self.kind != "random_substitution" and self.pool is None:
            raise ConfigError(f"{self.kind} requires a pool")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError("rate must lie in [0, 1]")
        if not 0.0 <= self.own_block_prob <= 1.0:
            raise ConfigError("own_block_prob must lie in [0, 1]")

    @property
    def tag(self) -> str:
        return f"{self.kind}:{self.pool or '*'}"


@dataclass
class SimConfig:
    seed: int
    pools: list[tuple[str, float]]
    n_blocks: int = 1000
    mean_block_interval: float = 600.0
    block_capacity: int = 1_000_000
    tx_rate: float = 1.0
    fee_mu: float = 3.0          # lognormal location of sat/vB rate
    fee_sigma: float = 1.2
    sub_threshold_fraction: float = 0.0
    congestion_fee_boost: float = 0.0
    vsize_model: dict = field(default_factory=lambda: {"kind": "fixed",
                                                       "value": 250})
    cpfp_rate: float = 0.0
    observer_lag: int = 0
    unobserved_rate: float = 0.0
    deviations: list[DeviationSpec] = field(default_factory=list)

    def __post_init__(self):
        if not self.pools:
            raise ConfigError("at least one pool required")
        total = sum(r for _, r in self.pools)
        if any(r < 0 for _, r in self.pools) or abs(total - 1.0) > 1e-9:
            raise ConfigError("pool hash rates must be non-negative and sum to 1")
        if self.n_blocks < 1:
            raise ConfigError("n_blocks must be positive")
        if self.block_capacity < 1:
            raise ConfigError("block_capacity must be positive")
        for rate_name in ("tx_rate", "cpfp_rate", "sub_threshold_fraction",
                          "unobserved_rate"):
            if getattr(self, rate_name) < 0:
                raise ConfigError(f"{rate_name} must be non-negative")
        kind = self.vsize_model.get("kind")
        if kind == "fixed":
            if int(self.vsize_model.get("value", 0)) < 1:
                raise ConfigError("fixed vsize must be >= 1")
        elif kind == "uniform":
            lo = int(self.vsize_model.get("lo", 110))
            hi = int(self.vsize_model.get("hi", 10_000))
            if not 1 <= lo <= hi:
                raise ConfigError("uniform vsize bounds must satisfy 1 <= lo <= hi")
        else:
            raise ConfigError(f"unknown vsize model kind {kind!r}")
        pool_names = {n for n, _ in self.pools}
        for dev in self.deviations:
            if dev.pool is not None and dev.pool not in pool_names:
                raise ConfigError(f"deviation pool {dev.pool!r} not configured")

    @classmethod
    def from_json(cls, doc: dict) -> "SimConfig":
        doc = dict(doc)
        doc["pools"] = [tuple(p) for p in doc.get("pools", ())]
        doc["deviations"] = [DeviationSpec(**d) for d in doc.get("deviations", ())]
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "SimConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass
class GroundTruth:
    """Per-mining-event mempool states plus deviation labels."""

    mempools: dict[int, frozenset[str]]
    tx_labels: dict[str, dict]
    block_labels: dict[int, dict]

    def tagged(self, tag: str) -> set[str]:
        return {t for t, lab in self.tx_labels.items() if lab.get("tag") == tag}


@dataclass
class SimResult:
    chain: ChainData
    pool_dir: PoolDirectory
    ground_truth: GroundTruth
    paths: Optional[dict[str, str]] = None


def pool_wallet(pool: str) -> str:
    return f"w-{pool}-0"


class _Sim:
    def __init__(self, config: SimConfig):
        self.cfg = config
        self.rng = random.Random(config.seed)
        self.txs: dict[str, Transaction] = {}
        self.counter = 0
        # pending txs in arrival order: (arrival_second, txid)
        self.pending: list[tuple[int, str]] = []
        self.confirmed: set[str] = set()
        self.dead = 0  # confirmed entries still inside self.pending
        self.backlog_vbytes = 0
        # parent sampling pool: unconfirmed txids, swap-remove on confirm
        self.unconf: list[str] = []
        self.unconf_pos: dict[str, int] = {}
        self.arr_of: dict[str, int] = {}
        self.fee_of: dict[str, int] = {}
        self.vsize_of: dict[str, int] = {}
        self.parent_of: dict[str, Optional[str]] = {}
        self.withheld: dict[str, str] = {}  # txid -> pool it is reserved for
        self.forced_queue: dict[str, list[str]] = {}
        self.decel_sets: dict[str, set[str]] = {}
        self.subthr_pending: list[str] = []
        self.tx_labels: dict[str, dict] = {}
        self.block_labels: dict[int, dict] = {}
        self.mempools: dict[int, frozenset[str]] = {}
        self.blocks: list[Block] = []
        self.quota: dict[int, int] = {}
        expected = max(config.tx_rate * config.mean_block_interval
                       * config.n_blocks, 1.0)
        self.tag_prob: dict[int, float] = {}
        for i, dev in enumerate(config.deviations):
            if dev.kind in ("self_interest_accel", "decelerate_set"):
                self.quota[i] = dev.count
                self.tag_prob[i] = min(1.0, dev.count / expected)
            elif dev.kind == "darkfee_accel":
                self.quota[i] = dev.count
            if dev.kind == "self_interest_accel":
                self.forced_queue.setdefault(dev.pool, [])
            if dev.kind == "decelerate_set":
                self.decel_sets.setdefault(dev.pool, set())

    # -- draws ---------------------------------------------------------

    def _draw_vsize(self) -> int:
        vm = self.cfg.vsize_model
        if vm["kind"] == "fixed":
            return int(vm["value"])
        return self.rng.randint(int(vm.get("lo", 110)), int(vm.get("hi", 10_000)))

    def _normal_fee(self, vsize: int) -> int:
        mu = self.cfg.fee_mu
        if self.cfg.congestion_fee_boost > 0.0:
            congestion = min(self.backlog_vbytes / self.cfg.block_capacity, 4.0)
            mu += self.cfg.congestion_fee_boost * congestion
        rate = min(self.rng.lognormvariate(mu, self.cfg.fee_sigma), 1e6)
        return max(math.ceil(rate * vsize), vsize)

    def _tagged_fee(self, dev: DeviationSpec, vsize: int) -> int:
        rate = self.rng.uniform(dev.feerate_lo, dev.feerate_hi)
        return max(math.ceil(rate * vsize), vsize)

    def _new_txid(self) -> str:
        txid = f"{self.counter:064x}"
        self.counter += 1
        return txid

    # -- arrival events --------------------------------------------------

    def _assign_tag(self) -> Optional[int]:
        for i, dev in enumerate(self.cfg.deviations):
            if i not in self.tag_prob or self.quota.get(i, 0) <= 0:
                continue
            if self.rng.random() < self.tag_prob[i]:
                self.quota[i] -= 1
                return i
        return None

    def _arrival(self, t_float: float):
        arr = int(t_float)
        cfg = self.cfg
        vsize = self._draw_vsize()
        tag_idx = self._assign_tag()
        parent: Optional[str] = None
        in_addrs: tuple[str, ...]
        label = None
        subthreshold = False
        if tag_idx is not None:
            dev = cfg.deviations[tag_idx]
            fee = self._tagged_fee(dev, vsize)
            txid = self._new_txid()
            if dev.kind == "self_interest_accel":
                in_addrs = (pool_wallet(dev.pool), f"a{self.counter}i")
                forced = self.rng.random() < dev.own_block_prob
                if forced:
                    self.withheld[txid] = dev.pool
                    self.forced_queue[dev.pool].append(txid)
                label = {"tag": dev.tag, "forced": forced}
            else:  # decelerate_set
                in_addrs = (f"a{self.counter}i",)
                self.decel_sets[dev.pool].add(txid)
                label = {"tag": dev.tag, "forced": False}
        else:
            txid = self._new_txid()
            in_addrs = (f"a{self.counter}i",)
            if cfg.sub_threshold_fraction > 0.0 and \
                    self.rng.random() < cfg.sub_threshold_fraction:
                fee = int(self.rng.uniform(0.05, 0.95) * vsize)
                subthreshold = True
            elif cfg.cpfp_rate > 0.0 and self.unconf and \
                    self.rng.random() < cfg.cpfp_rate:
                parent = self.unconf[self.rng.randrange(len(self.unconf))]
                p_rate = self.fee_of[parent] / self.vsize_of[parent]
                rate = p_rate * self.rng.uniform(0.5, 0.95)
                fee = max(math.ceil(rate * vsize), vsize)
            else:
                fee = self._normal_fee(vsize)
        received: Optional[int] = arr
        if cfg.unobserved_rate > 0.0 and self.rng.random() < cfg.unobserved_rate:
            received = None
        tx = Transaction(txid=txid, vsize=vsize, fee=fee, received=received,
                         parents=(parent,) if parent else (),
                         input_addrs=in_addrs,
                         output_addrs=(f"a{self.counter}o",))
        self.txs[txid] = tx
        self.arr_of[txid] = arr
        self.fee_of[txid] = fee
        self.vsize_of[txid] = vsize
        self.parent_of[txid] = parent
        self.pending.append((arr, txid))
        self.backlog_vbytes += vsize
        self.unconf_pos[txid] = len(self.unconf)
        self.unconf.append(txid)
        if subthreshold:
            self.subthr_pending.append(txid)
        if label is not None:
            self.tx_labels[txid] = label

    # -- block events ----------------------------------------------------

    def _pick_miner(self) -> str:
        r = self.rng.random()
        acc = 0.0
        for name, share in self.cfg.pools:
            acc += share
            if r < acc:
                return name
        return self.cfg.pools[-1][0]

    def _confirm(self, txid: str):
        self.confirmed.add(txid)
        self.backlog_vbytes -= self.vsize_of[txid]
        pos = self.unconf_pos.pop(txid, None)
        if pos is not None:
            last = self.unconf.pop()
            if pos < len(self.unconf):
                self.unconf[pos] = last
                self.unconf_pos[last] = pos
        self.dead += 1

    def _compact_pending(self):
        if self.dead * 2 > len(self.pending) and self.dead > 1024:
            self.pending = [(a, t) for a, t in self.pending
                            if t not in self.confirmed]
            self.dead = 0

    def _visible(self, t_int: int) -> list[str]:
        horizon = t_int - self.cfg.observer_lag
        cut = bisect_left(self.pending, (horizon, ""))
        return [txid for _, txid in self.pending[:cut]
                if txid not in self.confirmed]

    def _greedy(self, scope: list[str], capacity: int,
                taken_front: set[str]) -> list[str]:
        n = len(scope)
        if n == 0 or capacity <= 0:
            return []
        pos = {txid: i for i, txid in enumerate(scope)}
        fee = np.fromiter((self.fee_of[t] for t in scope), dtype=np.int64, count=n)
        vsize = np.fromiter((self.vsize_of[t] for t in scope), dtype=np.int64,
                            count=n)
        recv = np.fromiter((self.arr_of[t] for t in scope), dtype=np.int64,
                           count=n)
        tie = np.fromiter((int(t, 16) % (2**62) for t in scope), dtype=np.int64,
                          count=n)
        parent = np.empty(n, dtype=np.int64)
        for i, txid in enumerate(scope):
            p = self.parent_of[txid]
            if p is None or p in self.confirmed or p in taken_front:
                parent[i] = -1
            elif p in pos:
                parent[i] = pos[p]
            else:
                parent[i] = -2  # pending but not selectable here
        sel = _kernels.greedy_fill(fee, vsize, recv, tie, parent, capacity)
        return [scope[i] for i in sel]

    def _mine(self, height: int, t_int: int):
        cfg = self.cfg
        miner = self._pick_miner()
        visible = self._visible(t_int)
        visible_set = set(visible)
        blk_label: dict = {}
        capacity = cfg.block_capacity

        # dark-fee injections: fresh sub-threshold txs, front-placed
        injected: list[str] = []
        for i, dev in enumerate(cfg.deviations):
            if dev.kind != "darkfee_accel" or dev.pool != miner:
                continue
            if self.quota.get(i, 0) <= 0 or len(visible) < dev.min_block_txs:
                continue
            for _ in range(min(dev.per_block_cap, self.quota[i])):
                vsize = self._draw_vsize()
                if vsize > capacity - sum(self.vsize_of[t] for t in injected):
                    continue
                txid = self._new_txid()
                arr = max(t_int - 1, 0)
                tx = Transaction(txid=txid, vsize=vsize, fee=1, received=arr,
                                 input_addrs=(f"a{self.counter}i",),
                                 output_addrs=(f"a{self.counter}o",))
                self.txs[txid] = tx
                self.arr_of[txid] = arr
                self.fee_of[txid] = 1
                self.vsize_of[txid] = vsize
                self.parent_of[txid] = None
                self.backlog_vbytes += vsize
                self.tx_labels[txid] = {"tag": dev.tag, "forced": True}
                injected.append(txid)
                self.quota[i] -= 1
        capacity -= sum(self.vsize_of[t] for t in injected)

        # privately submitted self-interest txs, front-placed in own blocks
        forced: list[str] = []
        queue = self.forced_queue.get(miner, ())
        if queue:
            kept = []
            for txid in queue:
                if txid in self.confirmed:
                    continue
                if txid in visible_set and self.vsize_of[txid] <= capacity:
                    forced.append(txid)
                    capacity -= self.vsize_of[txid]
                else:
                    kept.append(txid)
            self.forced_queue[miner] = kept

        # norm-III violations: commit pending sub-threshold txs
        lowfee: list[str] = []
        for i, dev in enumerate(cfg.deviations):
            if dev.kind != "low_fee_include" or dev.pool != miner:
                continue
            budget = dev.per_block_cap
            if dev.count:
                budget = min(budget, self.quota.setdefault(i, dev.count))
            self.subthr_pending = [t for t in self.subthr_pending
                                   if t not in self.confirmed]
            for txid in self.subthr_pending:
                if budget <= 0:
                    break
                if txid in visible_set and self.vsize_of[txid] <= capacity:
                    lowfee.append(txid)
                    capacity -= self.vsize_of[txid]
                    budget -= 1
                    if dev.count:
                        self.quota[i] -= 1
        if lowfee:
            blk_label["lowfee"] = sorted(lowfee)

        # normal norm-following selection
        front = set(injected) | set(forced) | set(lowfee)
        excluded = set()
        for dev in cfg.deviations:
            if dev.kind == "decelerate_set" and dev.pool == miner:
                excluded |= self.decel_sets[dev.pool]
        scope = []
        for txid in visible:
            if txid in front or txid in excluded:
                continue
            reserved = self.withheld.get(txid)
            if reserved is not None and reserved != miner:
                continue
            if self.fee_of[txid] < self.vsize_of[txid]:  # < 1 sat/vB: norm III
                continue
            scope.append(txid)
        chosen = self._greedy(scope, capacity, front)

        # random substitution of the norm choice, in place
        for dev in cfg.deviations:
            if dev.kind != "random_substitution" or dev.rate <= 0.0:
                continue
            if dev.pool is not None and dev.pool != miner:
                continue
            m = round(dev.rate * len(chosen))
            if m == 0:
                continue
            chosen_set = set(chosen)
            in_block_parents = {self.parent_of[t] for t in chosen_set
                                if self.parent_of[t] in chosen_set}
            removable = [i for i, t in enumerate(chosen)
                         if t not in in_block_parents]
            m = min(m, len(removable))
            if m == 0:
                continue
            removed_idx = sorted(self.rng.sample(removable, m))
            pool_alts = [t for t in scope
                         if t not in chosen_set
                         and (self.parent_of[t] is None
                              or self.parent_of[t] in self.confirmed)]
            self.rng.shuffle(pool_alts)
            freed = capacity - sum(self.vsize_of[t] for t in chosen)
            freed += sum(self.vsize_of[chosen[i]] for i in removed_idx)
            subs: list[Optional[str]] = []
            for alt in pool_alts:
                if len(subs) == m:
                    break
                if self.vsize_of[alt] <= freed:
                    subs.append(alt)
                    freed -= self.vsize_of[alt]
            while len(subs) < m:
                subs.append(None)
            new_chosen = list(chosen)
            dropped = []
            for slot, alt in zip(removed_idx, subs):
                dropped.append(new_chosen[slot])
                new_chosen[slot] = alt
            chosen = [t for t in new_chosen if t is not None]
            blk_label.setdefault("substituted_out", []).extend(sorted(dropped))
            blk_label.setdefault("substituted_in", []).extend(
                sorted(t for t in subs if t is not None))

        txids = injected + forced + chosen + lowfee
        self.mempools[height] = frozenset(visible) | set(injected)
        if injected:
            blk_label["injected"] = sorted(injected)
        if forced:
            blk_label["forced"] = sorted(forced)
        if blk_label:
            self.block_labels[height] = blk_label
        for txid in txids:
            self._confirm(txid)
        self._compact_pending()
        block = Block(height=height, hash=f"{height:064x}", observed_at=t_int,
                      coinbase_tag=f"/{miner}/",
                      reward_addrs=(pool_wallet(miner),),
                      txids=tuple(txids))
        self.blocks.append(block)

    # -- main loop -------------------------------------------------------

    def run(self) -> tuple[ChainData, PoolDirectory, GroundTruth]:
        cfg = self.cfg
        t = 0.0
        next_arr = (t + self.rng.expovariate(cfg.tx_rate)
                    if cfg.tx_rate > 0 else math.inf)
        next_blk = t + self.rng.expovariate(1.0 / cfg.mean_block_interval)
        height = 0
        prev_t_int = 0
        while height < cfg.n_blocks:
            if next_arr <= next_blk:
                self._arrival(next_arr)
                next_arr += self.rng.expovariate(cfg.tx_rate)
            else:
                t_int = max(prev_t_int + 1, int(next_blk))
                self._mine(height, t_int)
                prev_t_int = t_int
                height += 1
                next_blk += self.rng.expovariate(1.0 / cfg.mean_block_interval)
        markers = {name: [name] for name, _ in cfg.pools}
        pool_dir = PoolDirectory(markers={n: tuple(m) for n, m in markers.items()})
        chain = ChainData(self.blocks, self.txs)
        chain.pool_of.update(attribute_pools(chain, pool_dir))
        gt = GroundTruth(mempools=self.mempools, tx_labels=self.tx_labels,
                         block_labels=self.block_labels)
        return chain, pool_dir, gt


def generate(config: SimConfig, out_dir: Optional[str] = None) -> SimResult:
    """Run the simulation; optionally write the ingest-schema files plus
    ground_truth.jsonl into ``out_dir``."""
    chain, pool_dir, gt = _Sim(config).run()
    paths = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "transactions": os.path.join(out_dir, "transactions.jsonl"),
            "blocks": os.path.join(out_dir, "blocks.jsonl"),
            "pools": os.path.join(out_dir, "pools.json"),
            "ground_truth": os.path.join(out_dir, "ground_truth.jsonl"),
        }
        write_transactions(paths["transactions"],
                           (chain.txs[k] for k in sorted(chain.txs)))
        write_blocks(paths["blocks"], chain.blocks)
        write_pool_config(paths["pools"],
                          {n: list(m) for n, m in pool_dir.markers.items()})
        with open(paths["ground_truth"], "w", encoding="utf-8") as fh:
            for h in sorted(gt.mempools):
                rec = {"event": "mempool", "height": h,
                       "txids": sorted(gt.mempools[h])}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            for txid in sorted(gt.tx_labels):
                rec = {"event": "tx_label", "txid": txid, **gt.tx_labels[txid]}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            for h in sorted(gt.block_labels):
                rec = {"event": "block_label", "height": h,
                       **gt.block_labels[h]}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return SimResult(chain=chain, pool_dir=pool_dir, ground_truth=gt,
                     paths=paths)


def load_ground_truth(path) -> GroundTruth:
    mempools: dict[int, frozenset[str]] = {}
    tx_labels: dict[str, dict] = {}
    block_labels: dict[int, dict] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            kind = rec.pop("event")
            if kind == "mempool":
                mempools[rec["height"]] = frozenset(rec["txids"])
            elif kind == "tx_label":
                txid = rec.pop("txid")
                tx_labels[txid] = rec
            elif kind == "block_label":
                h = rec.pop("height")
                block_labels[h] = rec
    return GroundTruth(mempools=mempools, tx_labels=tx_labels,
                       block_labels=block_labels)


@dataclass(frozen=True)
class ReplayReport:
    mismatched_heights: tuple[int, ...]
    missing: dict[int, frozenset[str]]  # in ground truth, not reconstructed
    extra: dict[int, frozenset[str]]    # reconstructed, not in ground truth

    @property
    def ok(self) -> bool:
        return not self.mismatched_heights


def replay_check(chain: ChainData, ground_truth: GroundTruth,
                 strict: bool = True) -> ReplayReport:
    """Verify the candidate-set reconstruction against the recorded miner
    mempools (observed txs only, dependents stripped on both sides)."""
    mismatched = []
    missing = {}
    extra = {}
    for height in sorted(ground_truth.mempools):
        got = candidate_set(chain, height).txids
        observed = {t for t in ground_truth.mempools[height]
                    if chain.txs[t].received is not None}
        expected = (strip_dependents(observed, chain)
                    - cpfp_set(chain.block_at(height), chain))
        if got != expected:
            mismatched.append(height)
            missing[height] = frozenset(expected - got)
            extra[height] = frozenset(got - expected)
    report = ReplayReport(mismatched_heights=tuple(mismatched),
                          missing=missing, extra=extra)
    if strict and not report.ok:
        raise MismatchFound(report.mismatched_heights)
    return report
