"""Execution counters proving the single-pass structure of inference.

The matcher and propagation stages record every execution here; tests
assert exactly one of each per inference call.
"""

from __future__ import annotations

import threading
from collections import Counter

_lock = threading.Lock()
_counts: Counter[str] = Counter()


def record(stage: str) -> None:
    with _lock:
        _counts[stage] += 1


def snapshot() -> dict[str, int]:
    with _lock:
        return dict(_counts)


def reset() -> None:
    with _lock:
        _counts.clear()
