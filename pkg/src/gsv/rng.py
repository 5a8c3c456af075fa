"""Counter-based random streams.

Samples are produced in fixed-size blocks; block ``k`` of a run seeded with
``seed`` always draws from ``Philox(SeedSequence([seed, k]))``. Results are
therefore identical whatever the number of worker threads.
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK_SIZE = 4096
THREADS_ENV = "GSV_THREADS"


def block_rng(seed, block):
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block)])))


def blocks(count, block_size=BLOCK_SIZE):
    """Yield ``(block_index, start, size)`` covering ``count`` samples."""
    if count < 1:
        raise ValueError("count must be >= 1")
    for k, start in enumerate(range(0, count, block_size)):
        yield k, start, min(block_size, count - start)


def thread_count():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def map_blocks(fn, count, seed, block_size=BLOCK_SIZE):
    """Apply ``fn(rng, size)`` to every block, returning results in block order."""
    jobs = [(block_rng(seed, k), size) for k, _, size in blocks(count, block_size)]
    nthreads = thread_count()
    if nthreads == 1 or len(jobs) == 1:
        return [fn(rng, size) for rng, size in jobs]
    with ThreadPoolExecutor(max_workers=nthreads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
