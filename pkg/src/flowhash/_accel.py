"""Numba acceleration toggle.

Hot kernels are written once in nopython-compatible form and exposed in two
variants: a numba-compiled one and the plain interpreted fallback.  The
environment variable ``FLOWHASH_NUMBA`` selects the default: set it to
``0``/``false``/``off`` to force the pure-Python path even when numba is
installed.  Individual call sites also accept an explicit ``engine`` argument.
"""

from __future__ import annotations

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

_DISABLE_VALUES = ("0", "false", "off", "no")


def numba_env_enabled() -> bool:
    return os.environ.get("FLOWHASH_NUMBA", "").strip().lower() not in _DISABLE_VALUES


NUMBA_ENABLED = HAS_NUMBA and numba_env_enabled()


def kernel_pair(func):
    """Return (numba-jitted, pure-python) variants of a kernel function."""
    if HAS_NUMBA:
        return numba.njit(cache=True)(func), func
    return func, func


def resolve_engine(engine: str) -> str:
    """Map an engine request to 'numba' or 'python'."""
    if engine == "auto":
        return "numba" if NUMBA_ENABLED else "python"
    if engine not in ("numba", "python"):
        raise ValueError(f"unknown engine {engine!r}; expected auto, numba, or python")
    if engine == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba engine requested but numba is not importable")
    return engine
