"""Kernel selection: compiled Cython loops when available, numpy otherwise.

Set STOKESLAB_PURE=1 to force the pure-numpy implementation.
"""

from __future__ import annotations

import os

if os.environ.get("STOKESLAB_PURE", "0") == "1":
    from . import _products_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _products_py as _impl

IMPLEMENTATION: str = _impl.IMPLEMENTATION
run_plus = _impl.run_plus
run_minus = _impl.run_minus
run_inv = _impl.run_inv
run_diff_plus = _impl.run_diff_plus
run_diff_minus = _impl.run_diff_minus

__all__ = [
    "IMPLEMENTATION",
    "run_plus",
    "run_minus",
    "run_inv",
    "run_diff_plus",
    "run_diff_minus",
]
