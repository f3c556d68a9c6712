"""Reproducible sample streams.

Samples are grouped in fixed-size chunks and chunk ``c`` of seed ``s`` is
drawn from its own generator keyed by ``(s, c)``.  Any partition of the
chunk range over workers therefore reproduces the serial stream exactly,
provided partial results are reduced in chunk order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar

import numpy as np

CHUNK = 8192

T = TypeVar("T")


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(chunk),))))


def aux_rng(seed: int, chunk: int) -> np.random.Generator:
    """Second generator for chunk ``chunk``; leaves the primary stream untouched."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(chunk), 1))))


def chunk_bounds(count: int, chunk_size: int = CHUNK):
    """List of ``(chunk_index, start, size)`` covering ``count`` samples."""
    out = []
    start = 0
    c = 0
    while start < count:
        size = min(chunk_size, count - start)
        out.append((c, start, size))
        start += size
        c += 1
    return out


def map_chunks(fn: Callable[[int, int, int], T], count: int, workers: int = 1) -> List[T]:
    """Evaluate ``fn(chunk, start, size)`` on every chunk; results in chunk order."""
    bounds = chunk_bounds(count)
    if workers <= 1 or len(bounds) == 1:
        return [fn(*b) for b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


def derived_seed(seed: int, index: int) -> int:
    """Deterministic child seed for grid point ``index``."""
    return int(np.random.SeedSequence(int(seed), spawn_key=(0x5EED, int(index))).generate_state(1)[0])
