"""Pure-Python kernel implementations.

Reference versions of the hot loops, selected when the compiled extension
is unavailable (or forced via CHAIN_AUDIT_PURE=1). All fee-rate comparisons
are exact rationals; no float division anywhere near an ordering decision.
"""

from __future__ import annotations

from bisect import bisect_left
from fractions import Fraction

import numpy as np

BACKEND = "pure"


def _as_lists(*arrays):
    # tolist() yields Python ints, keeping the arbitrary-precision math exact
    return tuple(np.asarray(a, dtype=np.int64).tolist() for a in arrays)


def feerate_order(fee, vsize, recv, tie):
    """Indices sorted by descending fee/vsize (exact), then ascending recv,
    then ascending tie."""
    fee_l, vsize_l, recv_l, tie_l = _as_lists(fee, vsize, recv, tie)
    idx = sorted(range(len(fee_l)),
                 key=lambda i: (Fraction(-fee_l[i], vsize_l[i]), recv_l[i], tie_l[i]))
    return np.asarray(idx, dtype=np.int64)


def greedy_fill(fee, vsize, recv, tie, parent, capacity):
    """Skip-and-continue greedy fill by descending fee-rate.

    parent[i] == -1 means freely selectable, -2 means never selectable, and
    p >= 0 means i may only be taken once p has been taken. Returns the
    selected indices in fill order.
    """
    order = feerate_order(fee, vsize, recv, tie)
    vsize_l = np.asarray(vsize, dtype=np.int64).tolist()
    parent_l = np.asarray(parent, dtype=np.int64).tolist()
    n = len(order)
    suffix_min = [0] * n
    running = None
    for pos in range(n - 1, -1, -1):
        v = vsize_l[order[pos]]
        running = v if running is None else min(running, v)
        suffix_min[pos] = running
    taken = bytearray(n)
    out = []
    residual = int(capacity)
    for pos in range(n):
        if residual < suffix_min[pos]:
            break
        i = int(order[pos])
        if vsize_l[i] > residual:
            continue
        p = parent_l[i]
        if p == -2 or (p >= 0 and not taken[p]):
            continue
        taken[i] = 1
        out.append(i)
        residual -= vsize_l[i]
    return np.asarray(out, dtype=np.int64)


def count_violations(t, fee, vsize, blk, eps):
    """Ordered pairs (i, j) with t_i + eps < t_j and feerate_i > feerate_j
    (checked); of those, count pairs with block_i > block_j (violations)."""
    t_l, fee_l, vsize_l, blk_l = _as_lists(t, fee, vsize, blk)
    n = len(t_l)
    order = sorted(range(n), key=lambda i: t_l[i])
    ts = [t_l[i] for i in order]
    checked = 0
    violations = 0
    eps = int(eps)
    for jpos in range(n):
        j = order[jpos]
        limit = bisect_left(ts, t_l[j] - eps)
        fj, vj, bj = fee_l[j], vsize_l[j], blk_l[j]
        for ipos in range(limit):
            i = order[ipos]
            if fee_l[i] * vj > fj * vsize_l[i]:
                checked += 1
                if blk_l[i] > bj:
                    violations += 1
    return checked, violations


def perc_errors(fee, vsize):
    """Signed (predicted - observed) percentile errors for a block's
    transactions given in observed order; fee-rate ties keep observed order."""
    fee_l, vsize_l = _as_lists(fee, vsize)
    n = len(fee_l)
    if n == 0:
        return np.zeros(0, dtype=np.float64)
    if n == 1:
        return np.zeros(1, dtype=np.float64)
    order = sorted(range(n), key=lambda i: Fraction(-fee_l[i], vsize_l[i]))
    err = np.zeros(n, dtype=np.float64)
    scale = 100.0 / (n - 1)
    for pred_pos, i in enumerate(order):
        err[i] = (pred_pos - i) * scale
    return err
