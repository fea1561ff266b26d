"""Kernel backend selection.

Hot inner loops (per-card grouping, core peeling, forest scoring) exist in
two flavors: numba-compiled loops and vectorized numpy. The numba path is
the default whenever numba imports cleanly; setting FRAUDLENS_NO_NUMBA=1
(or any of "true"/"yes") forces the numpy path. `set_backend` switches at
runtime, which the benchmark harness uses to compare the two.
"""

from __future__ import annotations

import os
from functools import wraps

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        # identity decorator so kernel modules still import
        if args and callable(args[0]):
            return args[0]

        def decorator(func):
            @wraps(func)
            def wrapper(*a, **kw):
                return func(*a, **kw)

            return wrapper

        return decorator


def _env_disabled() -> bool:
    return os.environ.get("FRAUDLENS_NO_NUMBA", "").strip().lower() in (
        "1",
        "true",
        "yes",
    )


_STATE = {"backend": "numpy" if (_env_disabled() or not HAVE_NUMBA) else "numba"}


def backend() -> str:
    """Active kernel backend, "numba" or "numpy"."""
    return _STATE["backend"]


def use_numba() -> bool:
    return _STATE["backend"] == "numba"


def set_backend(name: str) -> None:
    """Switch kernel backend at runtime ("numba" or "numpy")."""
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise ValueError("numba backend requested but numba is not importable")
    _STATE["backend"] = name
