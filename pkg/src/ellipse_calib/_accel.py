"""Backend selection for the hot numeric kernels.

The numba path is used when numba imports and ``ELLIPSE_CALIB_DISABLE_JIT``
is unset or false.  The pure-numpy path is always available and is what the
numba kernels are tested against.
"""

import os

_FALSY = {"", "0", "false", "no", "off"}


def jit_requested() -> bool:
    return os.environ.get("ELLIPSE_CALIB_DISABLE_JIT", "").strip().lower() in _FALSY


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    numba = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return numba.njit(*args, **kwargs)

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(fn):
        return fn

    return wrap


USE_NUMBA = HAVE_NUMBA and jit_requested()
