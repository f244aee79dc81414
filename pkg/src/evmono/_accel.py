"""Numba acceleration switch.

The hot kernels in :mod:`evmono._kernels` are written in plain loop-over-
ndarray style so that the exact same source runs both as compiled numba
code and as ordinary Python.  Set the environment variable

    EVMONO_DISABLE_NUMBA=1

before import to force the pure-python/numpy path (used by the fallback
leg of ``benchmarks/bench_kernels.py`` and as an escape hatch when numba
is unavailable or misbehaves).
"""

import os

_FALSEY = ("", "0", "false", "no", "off")


def _numba_enabled() -> bool:
    if os.environ.get("EVMONO_DISABLE_NUMBA", "").strip().lower() not in _FALSEY:
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USING_NUMBA = _numba_enabled()

if USING_NUMBA:
    from numba import njit
else:

    def njit(*args, **kwargs):
        """Identity decorator standing in for numba.njit."""
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap
