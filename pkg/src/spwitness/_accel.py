"""Numba switch.

Hot kernels are written once as plain Python loops and compiled with
``numba.njit`` unless ``SPWITNESS_DISABLE_NUMBA=1`` is set (or numba is not
importable), in which case callers route to the vectorized numpy paths.
"""

import os

_DISABLED = os.environ.get("SPWITNESS_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag
    _njit = None
    HAVE_NUMBA = False

JIT_OPTIONS = {"nogil": True, "cache": True}


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if HAVE_NUMBA:
        return _njit(**JIT_OPTIONS)(func)
    return func


def use_numba(flag=None):
    """Resolve a per-call backend request against availability."""
    if flag is None:
        return HAVE_NUMBA
    if flag and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but disabled or unavailable")
    return bool(flag)
