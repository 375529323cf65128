"""Chunked element loops, optionally threaded (``SURFAFEM_THREADS`` caps workers)."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 2048


def n_threads() -> int:
    raw = os.environ.get("SURFAFEM_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, min(n, os.cpu_count() or 1))


def chunks(n: int, size: int = DEFAULT_CHUNK):
    return [np.arange(s, min(s + size, n)) for s in range(0, n, size)]


def map_chunks(fn, n: int, size: int = DEFAULT_CHUNK) -> list:
    """Apply ``fn`` to index chunks of ``range(n)``; results keep chunk order."""
    parts = chunks(n, size)
    workers = n_threads()
    if workers == 1 or len(parts) == 1:
        return [fn(p) for p in parts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, parts))
