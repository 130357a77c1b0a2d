"""Numba/numpy lane selection for the hot solver kernels.

The exact transport solver ships two complete implementations of the same
pivot rules: a jitted kernel set and a vectorized numpy fallback.  The active
lane is chosen once at import time:

* ``FLOWOT_NUMBA=0`` (or ``false``/``off``/``numpy``) forces the numpy lane;
* otherwise numba is used when it imports cleanly, numpy when it does not.

Both lanes produce bit-identical pivot sequences, so results do not depend on
the lane; only speed does.  ``benchmarks/bench_backends.py`` measures the gap.
"""

import os

_flag = os.environ.get("FLOWOT_NUMBA", "").strip().lower()

if _flag in ("0", "false", "off", "numpy"):
    HAS_NUMBA = False
    _REASON = "disabled by FLOWOT_NUMBA"
else:
    try:
        import numba  # noqa: F401

        HAS_NUMBA = True
        _REASON = "numba available"
    except ImportError:
        HAS_NUMBA = False
        _REASON = "numba not importable"


def active_backend():
    """Return the name of the lane the solver dispatches to."""
    return "numba" if HAS_NUMBA else "numpy"


def backend_reason():
    """Return a short human-readable reason for the lane choice."""
    return _REASON
