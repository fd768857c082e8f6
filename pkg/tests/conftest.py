"""Shared fixtures and chain-building helpers."""

from __future__ import annotations

import pytest

from chainaudit.model import Block, ChainData, Transaction


def txid(n: int) -> str:
    return f"{n:064x}"


def mk_tx(n, vsize=100, fee=100, received=None, parents=(), inputs=None,
          outputs=None):
    return Transaction(txid=txid(n), vsize=vsize, fee=fee, received=received,
                       parents=tuple(txid(p) for p in parents),
                       input_addrs=tuple(inputs or (f"in{n}",)),
                       output_addrs=tuple(outputs or (f"out{n}",)))


def mk_block(height, tx_numbers, observed_at=None, tag="/solo/",
             reward_addrs=("w-solo-0",)):
    return Block(height=height, hash=f"{height:064x}",
                 observed_at=observed_at if observed_at is not None
                 else 600 * (height + 1),
                 coinbase_tag=tag, reward_addrs=tuple(reward_addrs),
                 txids=tuple(txid(n) for n in tx_numbers))


def mk_chain(txs, blocks, pool_of=None) -> ChainData:
    return ChainData(blocks, {t.txid: t for t in txs}, pool_of=pool_of)


@pytest.fixture(scope="session")
def null_sim():
    """Small norm-following chain reused across tests (no deviations)."""
    from chainaudit.sim import SimConfig, generate
    cfg = SimConfig(seed=1, pools=[("alpha", 0.5), ("bravo", 0.3),
                                   ("charlie", 0.2)],
                    n_blocks=100, mean_block_interval=600.0,
                    block_capacity=20_000, tx_rate=0.05,
                    vsize_model={"kind": "fixed", "value": 200})
    return generate(cfg)
