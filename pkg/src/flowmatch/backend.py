"""Kernel backend selection.

The compiled extension is preferred when importable; FLOWMATCH_BACKEND
forces one explicitly ("cython" or "python"). FLOWMATCH_THREADS caps the
worker count used by the hot kernels (default: all visible cores).
"""

from __future__ import annotations

import os

from .errors import ConfigError

_requested = os.environ.get("FLOWMATCH_BACKEND", "").strip().lower()
if _requested not in ("", "cython", "python"):
    raise ConfigError(
        f"FLOWMATCH_BACKEND must be 'cython' or 'python', got {_requested!r}"
    )

if _requested == "python":
    from . import _slowkern as kernels
elif _requested == "cython":
    from . import _fastkern as kernels  # type: ignore[no-redef]
else:
    try:
        from . import _fastkern as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _slowkern as kernels  # type: ignore[no-redef]

BACKEND_NAME: str = kernels.NAME


def thread_count() -> int:
    """Worker count for kernel calls: FLOWMATCH_THREADS, else cpu count."""
    raw = os.environ.get("FLOWMATCH_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"FLOWMATCH_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ConfigError(f"FLOWMATCH_THREADS must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1
