"""Deterministic fan-out helpers.

Work items are pure functions of their inputs, so results are collected by
index and never depend on scheduling order or worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_THREADS_ENV = "DB_LAB_THREADS"


def resolve_threads(threads: int | None) -> int:
    """CLI --threads wins; DB_LAB_THREADS is the fallback; default 1."""
    if threads is not None and threads >= 1:
        return int(threads)
    env = os.environ.get(_THREADS_ENV, "")
    if env.strip().isdigit() and int(env) >= 1:
        return int(env)
    return 1


def thread_map(fn, items, threads=1):
    """Map fn over items, preserving order. threads <= 1 runs serially."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
