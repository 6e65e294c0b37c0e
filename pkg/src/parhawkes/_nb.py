"""Numba import shim.

NUMBA_NUM_THREADS is raised to at least 8 before numba initializes its
threading layer, so worker counts up to 8 remain valid (and reproducible)
even on boxes with fewer cores.  Import numba only through this module.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, os.cpu_count() or 1)))
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

import numba  # noqa: E402
from numba import njit, prange  # noqa: E402,F401

MAX_WORKERS = int(numba.config.NUMBA_NUM_THREADS)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        return MAX_WORKERS
    return min(max(1, int(workers)), MAX_WORKERS)


@contextmanager
def worker_count(workers: int | None):
    """Temporarily pin the numba thread pool size.

    The combine-tree topology never depends on the thread count, so results
    are bitwise identical across worker counts; this only controls CPU use.
    """
    if workers is None:
        yield
        return
    old = numba.get_num_threads()
    numba.set_num_threads(resolve_workers(workers))
    try:
        yield
    finally:
        numba.set_num_threads(old)
