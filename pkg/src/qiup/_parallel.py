"""Row-chunked data-parallel map.

Chunk boundaries depend only on the problem size, never on the worker count,
so results are identical for any ``workers`` value.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

CHUNK_ROWS = 32


def default_workers() -> int:
    return os.cpu_count() or 1


def map_rows(func, n_rows: int, workers: int | None = None, chunk: int = CHUNK_ROWS):
    """Call ``func(slice)`` over fixed row chunks and return the results in order."""
    slices = [slice(i, min(i + chunk, n_rows)) for i in range(0, n_rows, chunk)]
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(slices) == 1:
        return [func(s) for s in slices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, slices))
