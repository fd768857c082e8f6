"""Parent-child dependency graphs and child-pays-for-parent classification.

A transaction is a CPFP transaction of a block exactly when it spends at
least one output of another transaction included in the same block.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import CycleDetected
from .model import Block, ChainData


@dataclass(frozen=True)
class DepGraph:
    """Edges child -> in-scope parents, restricted to one scope (a block's
    tx set or a candidate set). Acyclic by construction check."""

    edges: dict[str, frozenset[str]]

    def parents_of(self, txid: str) -> frozenset[str]:
        return self.edges.get(txid, frozenset())

    def dependents(self) -> set[str]:
        return {txid for txid, ps in self.edges.items() if ps}


def _check_acyclic(edges: dict[str, frozenset[str]]):
    # iterative DFS; spend cycles cannot occur in valid chain data
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {t: WHITE for t in edges}
    for root in edges:
        if color[root] != WHITE:
            continue
        stack = [(root, iter(edges[root]))]
        color[root] = GRAY
        while stack:
            node, it = stack[-1]
            advanced = False
            for parent in it:
                if parent not in edges:
                    continue
                c = color[parent]
                if c == GRAY:
                    raise CycleDetected(f"spend cycle through {parent}")
                if c == WHITE:
                    color[parent] = GRAY
                    stack.append((parent, iter(edges[parent])))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()


def build_graph(scope, chain: ChainData) -> DepGraph:
    """Edge u -> p exactly when p is a parent of u and both are in scope."""
    scope = set(scope)
    edges = {}
    for txid in scope:
        tx = chain.txs[txid]
        edges[txid] = frozenset(p for p in tx.parents if p in scope)
    _check_acyclic(edges)
    return DepGraph(edges=edges)


def cpfp_set(block: Block, chain: ChainData) -> set[str]:
    """Txids in the block spending from a transaction in the same block."""
    in_block = set(block.txids)
    return {txid for txid in block.txids
            if any(p in in_block for p in chain.txs[txid].parents)}


def strip_dependents(candidates, chain: ChainData) -> set[str]:
    """Remove every transaction having a parent inside the original
    candidate set (single pass, no fixpoint iteration after removals)."""
    candidates = set(candidates)
    return {txid for txid in candidates
            if not any(p in candidates for p in chain.txs[txid].parents)}
