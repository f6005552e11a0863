"""Numba switch.

Kernels in :mod:`owapto.kernels` are compiled with ``numba.njit`` unless the
environment variable ``OWAPTO_DISABLE_NUMBA`` is set to a truthy value (or
numba is not importable), in which case the pure numpy/Python fallbacks run.
The flag is read once, at import time.
"""

import os

ENV_FLAG = "OWAPTO_DISABLE_NUMBA"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _disabled_by_env():
    return os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


NUMBA_ENABLED = numba is not None and not _disabled_by_env()


def njit(fn):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(fn)
    return fn


def backend():
    return "numba" if NUMBA_ENABLED else "numpy"
