"""Deterministic chunked execution of per-path kernels on a thread pool.

Kernels are compiled with ``nogil=True`` and write into disjoint slices of
preallocated arrays, so the results never depend on the worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

CHUNK = 256


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def run_chunked(fn, n: int, workers: int | None = 1, chunk: int = CHUNK) -> None:
    """Call ``fn(start, stop)`` over [0, n) in fixed-size chunks."""
    spans = [(s, min(n, s + chunk)) for s in range(0, n, chunk)]
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(spans) <= 1:
        for s, e in spans:
            fn(s, e)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for fut in [pool.submit(fn, s, e) for s, e in spans]:
            fut.result()
