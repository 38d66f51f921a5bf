"""Numba availability probing and the kernel-path switch.

The hot numeric kernels in :mod:`flimsod.kernels` exist in two variants: a
numba ``@njit`` build and a vectorized numpy fallback.  The active path is
chosen once at import time:

* ``FLIMSOD_NUMBA=0`` in the environment forces the numpy fallback,
* otherwise numba is used whenever it imports cleanly.

``benchmarks/bench_kernels.py`` times both paths side by side.
"""

import functools
import os

_env = os.environ.get("FLIMSOD_NUMBA", "1").strip().lower()
_requested = _env not in ("0", "false", "off", "no")

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via FLIMSOD_NUMBA=0 instead
    numba = None
    HAS_NUMBA = False

NUMBA_ENABLED = _requested and HAS_NUMBA


def numba_enabled() -> bool:
    """True when the compiled kernel path is active."""
    return NUMBA_ENABLED


if HAS_NUMBA:
    jit = functools.partial(numba.njit, cache=True)
else:  # pragma: no cover
    def jit(*args, **kwargs):
        def deco(fn):
            return fn

        return deco
