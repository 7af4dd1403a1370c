"""Optional numba acceleration.

Set ``MEMTRACK_NO_NUMBA=1`` to force the pure-numpy code paths. The flag is
read once at import time; kernels also accept an explicit ``backend``.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("MEMTRACK_NO_NUMBA", "0") not in ("1", "true", "yes")


def njit(*args, **kwargs):
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("nopython", True)
    kwargs.setdefault("cache", True)
    return numba.jit(*args, **kwargs)


def resolve_backend(backend=None):
    if backend is None:
        return "numba" if USE_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
