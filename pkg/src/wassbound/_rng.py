"""Seed plumbing.

Every random stream is a PCG64 generator keyed by (seed, *path). The path
names the task (for example ("gg1_monotone", block)) so two estimators never
share a stream by accident, and a rep block always sees the same numbers no
matter how many blocks run.
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

_MASK64 = (1 << 64) - 1


def generator(seed: int, *path: int) -> np.random.Generator:
    if seed is None:
        raise ValueError("an explicit seed is required")
    seed = int(seed)
    if seed < 0 or seed > _MASK64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def tag(name: str) -> int:
    # stable small integer for a task name (python's hash() is salted per run)
    h = 0
    for ch in name.encode():
        h = (h * 131 + ch) % 2_147_483_647
    return h


def blocks(reps: int, block: int):
    """Yield (index, size) covering reps in fixed-size chunks."""
    i = 0
    start = 0
    while start < reps:
        size = min(block, reps - start)
        yield i, size
        i += 1
        start += size


def threads() -> int:
    """Worker cap from WASSBOUND_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("WASSBOUND_THREADS", "1")))
    except ValueError:
        return 1


def map_blocks(fn, reps: int, block: int) -> list:
    """fn(index, size) over every rep block; results come back in block order.

    Each block derives its own generator from its index, so the outcome does
    not depend on how many workers ran or in which order they finished.
    """
    jobs = list(blocks(reps, block))
    n = min(threads(), len(jobs))
    if n <= 1:
        return [fn(i, size) for i, size in jobs]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
