"""JIT switch for the numeric kernels.

Set ``NEWSBURST_DISABLE_JIT=1`` to force the pure Python/numpy kernels, e.g.
on platforms without numba or when debugging.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency, but stay usable
    numba = None

JIT_ENABLED = numba is not None and os.environ.get("NEWSBURST_DISABLE_JIT", "").strip() not in ("1", "true", "yes")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)
