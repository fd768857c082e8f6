"""Exact and approximate hypothesis tests for differential prioritization.

The acceleration test treats each block containing at least one audited
transaction (a c-block) as a Bernoulli trial with null success probability
theta0, the pool's normalized hash rate. Exact binomial tails are computed
through the regularized incomplete beta identity, always evaluating the
smaller tail directly so tiny p-values keep full relative precision and the
complementary-tail identity p_accel(x) + p_decel(x-1) = 1 holds to float
rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from scipy.special import betainc, gammaincc, ndtr

from .errors import (ApproximationInvalid, DomainError, EmptyWindow,
                     NoCBlocks, NoCTxFound)
from .ingest import hash_rate
from .model import ChainData
from .ordering import sppe as _sppe

#: Largest y for which the exact binomial path is used by default.
EXACT_LIMIT = 10**6


@dataclass(frozen=True)
class DiffTestResult:
    pool: str
    theta0: float
    x: int
    y: int
    p_accel: float
    p_decel: float
    sppe: Optional[float]
    alpha: float = 0.01

    @property
    def accel_flagged(self) -> bool:
        return self.p_accel < self.alpha

    @property
    def decel_flagged(self) -> bool:
        return self.p_decel < self.alpha


def _validate(x: int, y: int, theta0: float):
    if not 0 <= x <= y:
        raise DomainError(f"need 0 <= x <= y, got x={x}, y={y}")
    if not 0.0 < theta0 < 1.0:
        raise DomainError(f"theta0 must lie strictly in (0, 1), got {theta0}")


def binom_p_accel(x: int, y: int, theta0: float) -> float:
    """Exact upper tail P(B >= x) for B ~ Binomial(y, theta0)."""
    _validate(x, y, theta0)
    if x == 0:
        return 1.0
    upper = float(betainc(x, y - x + 1, theta0))
    if upper <= 0.5:
        return upper
    return 1.0 - float(betainc(y - x + 1, x, 1.0 - theta0))


def binom_p_decel(x: int, y: int, theta0: float) -> float:
    """Exact lower tail P(B <= x) for B ~ Binomial(y, theta0)."""
    _validate(x, y, theta0)
    if x == y:
        return 1.0
    lower = float(betainc(y - x, x + 1, 1.0 - theta0))
    if lower <= 0.5:
        return lower
    return 1.0 - float(betainc(x + 1, y - x, theta0))


def normal_approx_p(x: int, y: int, theta0: float, tail: str,
                    continuity_correction: bool = True) -> float:
    """Normal approximation to the binomial tails (mean y*theta0, variance
    y*theta0*(1-theta0)); valid only when that variance is at least 9."""
    _validate(x, y, theta0)
    if tail not in ("accel", "decel"):
        raise DomainError(f"tail must be 'accel' or 'decel', got {tail!r}")
    var = y * theta0 * (1.0 - theta0)
    if var < 9.0:
        raise ApproximationInvalid(
            f"y*theta0*(1-theta0) = {var:.3f} < 9; use the exact tail")
    sigma = math.sqrt(var)
    cc = 0.5 if continuity_correction else 0.0
    mean = y * theta0
    if tail == "decel":
        return float(ndtr((x + cc - mean) / sigma))
    return float(1.0 - ndtr((x - 1 + cc - mean) / sigma))


def fisher_combine(p_values: Sequence[float]) -> float:
    """Fisher's method: upper tail of chi-square with 2k degrees of freedom
    at X = -2 * sum(ln p_i)."""
    if not p_values:
        raise DomainError("need at least one p-value")
    for p in p_values:
        if not 0.0 < p <= 1.0:
            raise DomainError(f"p-values must lie in (0, 1], got {p}")
    stat = -2.0 * sum(math.log(p) for p in p_values)
    return float(gammaincc(len(p_values), stat / 2.0))


def run_diff_test(chain: ChainData, pool: str, c_txs: Iterable[str],
                  window: tuple[int, int], alpha: float = 0.01) -> DiffTestResult:
    """Differential-prioritization test of ``pool`` on the c-transaction set.

    y counts blocks in the window holding at least one confirmed c-tx, x the
    subset mined by the pool; theta0 is the pool's hash rate over the window.
    The SPPE is computed over the pool's own c-blocks when scoreable.
    """
    lo, hi = window
    if not chain.blocks_in(lo, hi):
        raise EmptyWindow(f"no blocks in heights [{lo}, {hi}]")
    theta0 = hash_rate(chain, pool, window)
    if not 0.0 < theta0 < 1.0:
        raise DomainError(
            f"degenerate hash rate {theta0} for pool {pool!r}; test undefined")
    c_txs = set(c_txs)
    c_heights = set()
    for txid in c_txs:
        h = chain.confirm_height(txid)
        if h is not None and lo <= h <= hi:
            c_heights.add(h)
    y = len(c_heights)
    if y == 0:
        raise NoCBlocks("no block in the window contains a c-transaction")
    pool_heights = sorted(h for h in c_heights if chain.pool_of.get(h) == pool)
    x = len(pool_heights)
    if y <= EXACT_LIMIT:
        p_accel = binom_p_accel(x, y, theta0)
        p_decel = binom_p_decel(x, y, theta0)
    else:
        p_accel = normal_approx_p(x, y, theta0, "accel")
        p_decel = normal_approx_p(x, y, theta0, "decel")
    sppe_val: Optional[float] = None
    if pool_heights:
        try:
            sppe_val = _sppe((chain.block_at(h) for h in pool_heights), c_txs, chain)
        except NoCTxFound:
            sppe_val = None
    return DiffTestResult(pool=pool, theta0=theta0, x=x, y=y,
                          p_accel=p_accel, p_decel=p_decel, sppe=sppe_val,
                          alpha=alpha)
