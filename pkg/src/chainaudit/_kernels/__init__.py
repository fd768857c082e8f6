"""Hot-loop kernels: compiled extension with a pure-Python fallback.

The compiled backend is used when importable; set CHAIN_AUDIT_PURE=1 to
force the fallback. ``BACKEND`` names the active implementation.
"""

import os

from . import _pure

if os.environ.get("CHAIN_AUDIT_PURE") == "1":
    _impl = _pure
else:
    try:
        from . import _speedups as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

BACKEND = _impl.BACKEND
feerate_order = _impl.feerate_order
greedy_fill = _impl.greedy_fill
count_violations = _impl.count_violations
perc_errors = _impl.perc_errors

__all__ = ["BACKEND", "feerate_order", "greedy_fill", "count_violations",
           "perc_errors"]
