"""Uniform time grids and counter-based Brownian increments.

Replica ``r`` of a batch draws from a Philox stream keyed by ``(seed, r)``;
increment ``j`` is raw output ``j`` of that stream.  Any cell therefore depends
on ``(seed, r, j)`` alone and any sub-rectangle can be regenerated in
isolation, in any order, on any worker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import DomainError

_U53 = 2.0**-53
_SHIFT = np.uint64(11)


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    @property
    def h(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1, dtype=float) * self.horizon / self.steps

    def index_of(self, t: float) -> int:
        """Node index of ``t``; raises if ``t`` is not (numerically) a node."""
        k = int(round(t / self.h))
        if not (0 <= k <= self.steps) or abs(k * self.h - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"t={t!r} is not a node of the grid (T={self.horizon}, n={self.steps})")
        return k


def make_grid(T: float, n: int) -> TimeGrid:
    if not (math.isfinite(T) and T > 0):
        raise DomainError(f"horizon T={T!r} must be positive")
    if int(n) != n or n < 1:
        raise DomainError(f"steps n={n!r} must be a positive integer")
    return TimeGrid(float(T), int(n))


def _replica_uniforms(seed: int, r: int, j0: int, j1: int) -> np.ndarray:
    bg = np.random.Philox(key=seed | (r << 64))
    raw = bg.random_raw(j1)[j0:]
    return ((raw >> _SHIFT).astype(np.float64) + 0.5) * _U53


def gaussian_block(seed: int, r0: int, r1: int, j0: int, j1: int) -> np.ndarray:
    """Standard normals for replicas ``r0..r1-1`` and steps ``j0..j1-1``."""
    out = np.empty((r1 - r0, j1 - j0))
    for i, r in enumerate(range(r0, r1)):
        out[i] = _replica_uniforms(seed, r, j0, j1)
    return ndtri(out)


@dataclass(frozen=True)
class NoiseBatch:
    """Brownian increments for ``replicas`` paths on ``grid``.

    Increments are generated on demand; :meth:`block` regenerates any
    sub-rectangle bit-for-bit.
    """

    grid: TimeGrid
    replicas: int
    seed: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def block(self, r0: int = 0, r1: int | None = None, j0: int = 0, j1: int | None = None) -> np.ndarray:
        r1 = self.replicas if r1 is None else r1
        j1 = self.grid.steps if j1 is None else j1
        if not (0 <= r0 <= r1 <= self.replicas and 0 <= j0 <= j1 <= self.grid.steps):
            raise DomainError(f"block [{r0}:{r1}, {j0}:{j1}] outside the batch")
        return gaussian_block(self.seed, r0, r1, j0, j1) * math.sqrt(self.grid.h)

    def replica(self, r: int) -> np.ndarray:
        return self.block(r, r + 1)[0]

    @property
    def increments(self) -> np.ndarray:
        """Full ``replicas x steps`` array (materialized once, read-only)."""
        if "full" not in self._cache:
            arr = self.block()
            arr.flags.writeable = False
            self._cache["full"] = arr
        return self._cache["full"]

    @property
    def substream_ids(self) -> range:
        return range(self.replicas)


def sample_noise(grid: TimeGrid, m: int, seed: int) -> NoiseBatch:
    if int(m) != m or m < 1:
        raise DomainError(f"replica count m={m!r} must be a positive integer")
    if not (0 <= seed < 2**64):
        raise DomainError(f"seed={seed!r} must be a 64-bit unsigned integer")
    return NoiseBatch(grid, int(m), int(seed))


def brownian_path(grid: TimeGrid, increments: np.ndarray) -> np.ndarray:
    """Partial sums B_{t_k} (last axis), starting at B_0 = 0."""
    inc = np.asarray(increments)
    zeros = np.zeros(inc.shape[:-1] + (1,))
    return np.concatenate([zeros, np.cumsum(inc, axis=-1)], axis=-1)
