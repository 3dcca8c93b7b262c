"""Acceleration layer: numba when available, plain Python otherwise.

The hot loops in :mod:`epictrl.kernels` are written so that the exact same
source runs compiled (numba) or interpreted (numpy + scalars).  Set
``EPICTRL_NO_NUMBA=1`` to force the fallback; ``benchmarks/bench_kernels.py``
times the two paths against each other.
"""

import os


def _identity_jit(*args, **kwargs):
    # mimics numba.njit: usable bare or with options
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap


_disabled = os.environ.get("EPICTRL_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

if _disabled:
    njit = _identity_jit
    NUMBA_ENABLED = False
else:
    try:
        from numba import njit  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - depends on environment
        njit = _identity_jit
        NUMBA_ENABLED = False
