"""Worker-count setting and slice-parallel execution for the column kernels.

Every kernel that uses :func:`run_slices` writes each output slot from exactly
one worker, so results do not depend on the number of threads.
"""
from concurrent.futures import ThreadPoolExecutor
import os

_threads = 1

# below this many items per call the pool overhead dominates
_MIN_ITEMS = 2048


def set_threads(n):
    global _threads
    if n is None or n < 1:
        n = os.cpu_count() or 1
    _threads = int(n)


def get_threads():
    return _threads


def run_slices(total, fn, weights=None):
    """Call ``fn(lo, hi)`` over a partition of ``range(total)``.

    ``weights`` (cumulative work, length ``total + 1``) balances the split;
    without it the slices have equal length.
    """
    workers = min(_threads, max(1, total))
    if workers == 1 or total < _MIN_ITEMS:
        fn(0, total)
        return
    if weights is None:
        bounds = [total * k // workers for k in range(workers + 1)]
    else:
        import numpy as np

        targets = np.linspace(weights[0], weights[-1], workers + 1)
        bounds = list(np.searchsorted(weights, targets).clip(0, total))
        bounds[0], bounds[-1] = 0, total
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        for f in futures:
            f.result()
