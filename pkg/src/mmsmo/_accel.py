"""Optional numba acceleration.

Hot kernels are written once in a numba-compatible subset of Python and
wrapped with :func:`maybe_njit`. Set ``MMSMO_NUMBA=0`` to run the plain
Python/numpy path instead (useful for debugging and for the benchmark).
"""
import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("MMSMO_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


def maybe_njit(fn):
    """JIT-compile ``fn`` in nopython mode when numba is enabled."""
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn


def py_func(fn):
    """Return the uncompiled Python function behind a (possibly) jitted kernel."""
    return getattr(fn, "py_func", fn)
