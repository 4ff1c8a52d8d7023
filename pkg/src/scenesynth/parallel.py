"""Optional row-block thread parallelism with deterministic results.

Workers always write to disjoint row ranges of preallocated outputs and no
reduction order depends on scheduling, so results are bit-identical for any
thread cap. The cap is process-global: the CLI sets it from --threads or
SPATIALGEN_THREADS, library users may call set_max_threads directly.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Tuple

__all__ = ["set_max_threads", "get_max_threads", "resolve_thread_count", "row_blocks", "run_blocks"]

THREADS_ENV_VAR = "SPATIALGEN_THREADS"

_max_threads = 1


def set_max_threads(n: int) -> None:
    global _max_threads
    if n < 1:
        raise ValueError("thread cap must be >= 1")
    _max_threads = int(n)


def get_max_threads() -> int:
    return _max_threads


def resolve_thread_count(flag_value=None) -> int:
    """--threads flag > SPATIALGEN_THREADS env > available cores."""
    if flag_value is not None:
        return int(flag_value)
    env = os.environ.get(THREADS_ENV_VAR)
    if env is not None and env.strip():
        return int(env)
    return os.cpu_count() or 1


def row_blocks(height: int, workers: int) -> List[Tuple[int, int]]:
    workers = max(1, min(workers, height))
    step = (height + workers - 1) // workers
    return [(lo, min(lo + step, height)) for lo in range(0, height, step)]


def run_blocks(fn: Callable[[int, int], None], height: int) -> None:
    """Run fn(row_start, row_stop) over disjoint blocks, threaded if allowed."""
    blocks = row_blocks(height, _max_threads)
    if len(blocks) == 1:
        fn(0, height)
        return
    with ThreadPoolExecutor(max_workers=len(blocks)) as ex:
        futures = [ex.submit(fn, lo, hi) for lo, hi in blocks]
        for fut in futures:
            fut.result()
