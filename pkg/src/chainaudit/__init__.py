"""Transaction-prioritization audit toolkit for proof-of-work chains.

Reconstructs fee-rate-norm baseline blocks, measures ordering deviations
(position prediction errors, violation pairs, baseline overlap), and runs
exact binomial tests for differential acceleration or deceleration of
transaction sets by specific mining pools. A deterministic synthetic-chain
simulator provides ground-truth-labeled data as a correctness oracle.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND

__all__ = ["KERNEL_BACKEND", "__version__"]
