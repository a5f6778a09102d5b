"""Deterministic chunked execution.

Work is split into chunks whose boundaries depend only on the task list,
never on the worker count; results are merged in chunk order.  Because
every simulation in this package is keyed by global replica ids, the same
chunk computes the same bytes on any worker, so reports are identical for
any --workers setting.
"""

from __future__ import annotations

import multiprocessing as mp
import os


def worker_count(requested: int | None) -> int:
    """Resolve a worker count: explicit flag, RWRE_LAB_WORKERS, else 1."""
    if requested is not None and requested >= 1:
        return requested
    env = os.environ.get("RWRE_LAB_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def map_tasks(fn, tasks: list, workers: int = 1) -> list:
    """Apply fn over tasks, preserving order; fn must be picklable when
    workers > 1."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with mp.get_context("fork").Pool(processes=min(workers, len(tasks))) as pool:
        return pool.map(fn, tasks)
