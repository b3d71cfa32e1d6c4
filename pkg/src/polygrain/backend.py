"""Kernel backend selection.

Hot numeric kernels exist in two variants: numba-jitted loops and a pure-numpy
fallback.  The active backend is chosen once at import time from the
POLYGRAIN_BACKEND environment variable:

    POLYGRAIN_BACKEND=numba   force numba (ImportError if unavailable)
    POLYGRAIN_BACKEND=numpy   force the pure-numpy fallback
    unset / auto              numba when importable, numpy otherwise

``benchmarks/bench_kernels.py`` compares the two.
"""

import os

_choice = os.environ.get("POLYGRAIN_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(f"POLYGRAIN_BACKEND must be auto|numba|numpy, got {_choice!r}")

USING_NUMBA = False
if _choice in ("auto", "numba"):
    try:
        import numba  # noqa: F401
        USING_NUMBA = True
    except ImportError:
        if _choice == "numba":
            raise
        USING_NUMBA = False

BACKEND = "numba" if USING_NUMBA else "numpy"

if USING_NUMBA:
    from numba import njit as _njit

    def jit(func):
        """Compile a loop kernel in nopython mode."""
        return _njit(cache=False, fastmath=False)(func)
else:
    def jit(func):
        """No-op when running on the numpy backend."""
        return func


def set_num_threads(n):
    """Bound numba's thread pool; harmless no-op on the numpy backend."""
    if USING_NUMBA and n and n > 0:
        import numba
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
