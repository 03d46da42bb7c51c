"""Numba availability and the switch between jitted and pure-numpy kernels.

Set ``CYCLELR_NO_JIT=1`` to force the numpy implementations even when numba
is importable. The choice is made once, at import time.
"""

import os

_FALSEY = {"", "0", "false", "no", "off"}

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _njit = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("CYCLELR_NO_JIT", "").strip().lower() in _FALSEY


def njit(func):
    """Compile ``func`` with numba when present; otherwise return it as-is.

    The returned object is only dispatched to when ``USE_NUMBA`` is true, but
    compiling lazily means importing the package never pays for it.
    """
    if not HAVE_NUMBA:
        return func
    return _njit(cache=True, nogil=True)(func)


def backend():
    return "numba" if USE_NUMBA else "numpy"
