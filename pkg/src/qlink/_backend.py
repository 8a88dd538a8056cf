"""Kernel backend selection.

Set ``QLINK_NUMBA=0`` in the environment to force the pure-numpy kernels.
The choice is made once at import time.
"""
from __future__ import annotations

import os

_DISABLED_VALUES = {"0", "false", "no", "off"}


def _numba_requested() -> bool:
    return os.environ.get("QLINK_NUMBA", "1").strip().lower() not in _DISABLED_VALUES


try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise.

    The compiled functions are always defined so that benchmarks and tests can
    reach both paths regardless of ``QLINK_NUMBA``.
    """
    if HAVE_NUMBA:
        from numba import njit as _njit

        return _njit(*args, **kwargs)

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
