"""Kernel dispatch: the compiled extension when built, numpy otherwise.

Set ``IGT_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the
implementation actually in use.
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("IGT_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from ._ext import kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

jacobi_eigh = _impl.jacobi_eigh
pairs_within = _impl.pairs_within
min_dist_within = _impl.min_dist_within

__all__ = ["BACKEND", "jacobi_eigh", "pairs_within", "min_dist_within"]
