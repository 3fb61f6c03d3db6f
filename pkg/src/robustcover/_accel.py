"""Numba toggle.

Set ``ROBUSTCOVER_DISABLE_NUMBA=1`` to force the pure-numpy kernels. The flag
is read once, at import time.
"""
import os

DISABLE_ENV = "ROBUSTCOVER_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None


def numba_requested() -> bool:
    return os.environ.get(DISABLE_ENV, "").strip().lower() not in ("1", "true", "yes", "on")


USE_NUMBA = numba is not None and numba_requested()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
