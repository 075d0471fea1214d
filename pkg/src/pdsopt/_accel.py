"""Backend selection for the hot kernels.

Kernels are written once as plain numpy-compatible Python and compiled with
``numba.njit`` when numba is importable. Set ``PDSOPT_DISABLE_NUMBA=1`` before
import to run everything as ordinary Python/numpy; the Gauss-map kernel then
switches to its vectorized numpy implementation.
"""
from __future__ import annotations

import os

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a soft dependency
    numba = None
    NUMBA_AVAILABLE = False


def _env_disabled() -> bool:
    return os.environ.get("PDSOPT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = NUMBA_AVAILABLE and not _env_disabled()


def njit(func):
    """Compile ``func`` with numba when enabled, otherwise return it unchanged."""
    if not USE_NUMBA:
        return func
    return numba.njit(cache=True)(func)


def set_threads(n: int | None) -> None:
    if n is None or not NUMBA_AVAILABLE:
        return
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
