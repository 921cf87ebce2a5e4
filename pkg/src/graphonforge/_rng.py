"""Deterministic, thread-count invariant random streams.

Every stochastic routine splits its work into fixed-size blocks.  Block
``b`` of task ``task`` draws from a generator keyed by ``(seed, task, b)``,
so the numbers produced do not depend on how blocks are scheduled.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

BLOCK = 65536
T = TypeVar("T")


def task_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def generator(seed: int, *key: int | str) -> np.random.Generator:
    spawn = tuple(task_id(k) if isinstance(k, str) else int(k) for k in key)
    seq = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=spawn)
    return np.random.Generator(np.random.Philox(seq))


def thread_count() -> int:
    raw = os.environ.get("GRAPHONFORGE_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def block_sizes(total: int, block: int = BLOCK) -> list[int]:
    if total <= 0:
        return []
    full, rest = divmod(total, block)
    return [block] * full + ([rest] if rest else [])


def map_blocks(fn: Callable[[np.random.Generator, int], T], total: int, seed: int,
               task: str, block: int = BLOCK) -> list[T]:
    """Run ``fn(rng, size)`` over the blocks of ``total`` draws, in block order."""
    sizes = block_sizes(total, block)
    jobs = [(generator(seed, task, b), s) for b, s in enumerate(sizes)]
    workers = min(thread_count(), len(jobs)) if jobs else 1
    if workers <= 1:
        return [fn(g, s) for g, s in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda js: fn(*js), jobs))


def combine_moments(parts: Sequence[tuple[float, float, int]]) -> tuple[float, float]:
    """Merge per-block ``(sum, sum_sq, n)`` into ``(mean, standard error)``."""
    s = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    n = sum(p[2] for p in parts)
    if n == 0:
        raise ValueError("no samples")
    mean = s / n
    var = max(s2 / n - mean * mean, 0.0)
    if n > 1:
        var *= n / (n - 1)
    return mean, float(np.sqrt(var / n))
