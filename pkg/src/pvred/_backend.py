"""Selects the JIT backend for the numeric kernels.

Set ``PVRED_DISABLE_JIT=1`` to force the pure-numpy path. If numba is not
importable the numpy path is used regardless.
"""
from __future__ import annotations

import os

_DISABLED = os.environ.get("PVRED_DISABLE_JIT", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is installed in CI
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _DISABLED


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, else identity."""
    if not HAS_NUMBA:
        return func
    return numba.njit(cache=True)(func)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
