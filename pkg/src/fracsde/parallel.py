"""Schedule-independent replica parallelism.

Replicas are cut into fixed-size chunks whose boundaries never depend on the
worker count, and all reductions run a fixed pairwise tree.  Results are
therefore bitwise identical for any number of threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

CHUNK = 2048


def chunk_bounds(m: int, chunk: int = CHUNK) -> list[tuple[int, int]]:
    return [(r0, min(r0 + chunk, m)) for r0 in range(0, m, chunk)]


def map_chunks(fn: Callable[[int, int], T], m: int, threads: int = 1, chunk: int = CHUNK) -> list[T]:
    """Apply ``fn(r0, r1)`` to every chunk; results come back in chunk order."""
    bounds = chunk_bounds(m, chunk)
    if threads <= 1 or len(bounds) == 1:
        return [fn(r0, r1) for r0, r1 in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


def tree_sum(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Pairwise-tree sum along ``axis`` with a shape-determined evaluation order."""
    a = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    if a.shape[0] == 0:
        return np.zeros(a.shape[1:])
    while a.shape[0] > 1:
        if a.shape[0] % 2:
            a = np.concatenate([a, np.zeros((1,) + a.shape[1:])])
        a = a[0::2] + a[1::2]
    return a[0]


def concat(parts: Sequence[np.ndarray], axis: int = 0) -> np.ndarray:
    return np.concatenate(list(parts), axis=axis)
