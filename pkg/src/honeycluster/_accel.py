"""Backend switch for the numeric kernels.

Kernels are compiled with numba when it is importable. Setting the
environment variable ``HONEYCLUSTER_DISABLE_NUMBA=1`` (read once, at import)
forces the pure-numpy implementations instead.
"""

from __future__ import annotations

import os

ENV_FLAG = "HONEYCLUSTER_DISABLE_NUMBA"

try:
    import numba as _nb

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _nb = None
    NUMBA_AVAILABLE = False


def _flag_set(value: str | None) -> bool:
    return (value or "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = NUMBA_AVAILABLE and not _flag_set(os.environ.get(ENV_FLAG))


def njit(*args, **kwargs):
    """``numba.njit`` with caching on; identity decorator when numba is absent."""
    if not NUMBA_AVAILABLE:
        if args and callable(args[0]):
            return args[0]
        return lambda func: func
    kwargs.setdefault("cache", True)
    return _nb.njit(*args, **kwargs)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
