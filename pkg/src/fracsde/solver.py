"""Volterra-Euler discretization of the Caputo SDE in integral form.

On a uniform grid with ``t_k = k h`` the scheme reads

    X_k = x0 + (1/Gamma(alpha)) * sum_{j<k} [ w_{k-j} b(t_j, X_j) + kappa_{k-j} sigma(t_j, X_j) dB_j ]

with exactly integrated drift weights ``w`` and a diffusion kernel ``kappa``
chosen by :class:`SchemeConfig`.  The recursion is strictly causal, so one
pass over ``k`` solves it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from . import specfun
from .errors import DivergenceError, DomainError
from .models import CoefficientModel
from .parallel import concat, map_chunks
from .paths import NoiseBatch, TimeGrid

DriftRule = Literal["integrated_weights"]
DiffusionRule = Literal["left_point_kernel", "integrated_l2_weights"]


@dataclass(frozen=True)
class SchemeConfig:
    drift_rule: DriftRule = "integrated_weights"
    diffusion_rule: DiffusionRule = "left_point_kernel"

    def __post_init__(self):
        if self.drift_rule != "integrated_weights":
            raise DomainError(f"unknown drift rule {self.drift_rule!r}")
        if self.diffusion_rule not in ("left_point_kernel", "integrated_l2_weights"):
            raise DomainError(f"unknown diffusion rule {self.diffusion_rule!r}")

    def drift_weights(self, alpha, h, n):
        return specfun.plain_lag_weights(alpha, h, n)

    def drift_log_weights(self, alpha, h, n):
        return specfun.log_lag_weights(alpha, h, n)

    def diffusion_kernel(self, alpha, h, n):
        if self.diffusion_rule == "left_point_kernel":
            return specfun.left_point_kernel(alpha, h, n)
        return specfun.l2_lag_kernel(alpha, h, n)

    def diffusion_log_kernel(self, alpha, h, n):
        """alpha-derivative of :meth:`diffusion_kernel`."""
        if self.diffusion_rule == "left_point_kernel":
            return specfun.left_point_log_kernel(alpha, h, n)
        return specfun.l2_lag_log_kernel(alpha, h, n)


DEFAULT_SCHEME = SchemeConfig()


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    order: float
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.steps + 1,):
            raise DomainError("trajectory length does not match the grid")

    def at(self, t: float) -> float:
        return float(self.values[self.grid.index_of(t)])


def check_order(alpha: float, name: str = "alpha") -> float:
    alpha = float(alpha)
    if not (math.isfinite(alpha) and 0.5 < alpha <= 1.0):
        raise DomainError(f"{name}={alpha!r} must lie in (1/2, 1]")
    return alpha


LANE = 32


def pad_columns(a: np.ndarray, lane: int = LANE) -> np.ndarray:
    """Zero-pad the replica axis (last) to a multiple of ``lane``.

    BLAS runs remainder columns through a different code path, so without
    padding a replica's rounding would depend on its position in the batch.
    """
    m = a.shape[-1]
    extra = -m % lane
    if extra == 0:
        return np.ascontiguousarray(a)
    pad = np.zeros(a.shape[:-1] + (extra,))
    return np.ascontiguousarray(np.concatenate([a, pad], axis=-1))


def _volterra_step(F, G, k, wr, kr):
    """Convolution sum at node k; ``F``/``G`` are time-major, ``wr``/``kr`` lag-reversed.

    ``wr[n-k:]`` lists lags k..1, matching rows j = 0..k-1 (positive stride keeps BLAS fast).
    """
    n = wr.shape[0]
    return wr[n - k :] @ F[:k] + kr[n - k :] @ G[:k]


def solve_paths(
    model: CoefficientModel,
    alpha: float,
    grid: TimeGrid,
    increments: np.ndarray,
    cfg: SchemeConfig = DEFAULT_SCHEME,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve a batch of paths; returns ``(X, failed)``.

    ``X`` has shape ``(m, n+1)``.  Replicas whose state becomes non-finite are
    flagged in ``failed`` and carry NaN from that step on.
    """
    alpha = check_order(alpha)
    dB = np.atleast_2d(np.asarray(increments, dtype=float))
    m, n = dB.shape
    if n != grid.steps:
        raise DomainError(f"increments have {n} steps, grid has {grid.steps}")
    h, t = grid.h, grid.nodes
    rg = 1.0 / math.gamma(alpha)
    wr = (cfg.drift_weights(alpha, h, n) * rg)[::-1].copy()
    kr = (cfg.diffusion_kernel(alpha, h, n) * rg)[::-1].copy()
    dBT = pad_columns(dB.T)
    mp = dBT.shape[1]
    XT = np.empty((n + 1, mp))
    XT[0] = model.x0
    F = np.empty((n, mp))
    G = np.empty((n, mp))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n + 1):
            j = k - 1
            F[j] = model.b(t[j], XT[j])
            G[j] = model.sigma(t[j], XT[j]) * dBT[j]
            XT[k] = model.x0 + _volterra_step(F, G, k, wr, kr)
    X = np.ascontiguousarray(XT[:, :m].T)
    failed = ~np.isfinite(X).all(axis=1)
    if failed.any():
        bad = ~np.isfinite(X)
        first = np.argmax(bad, axis=1)
        for r in np.flatnonzero(failed):
            X[r, first[r]:] = np.nan
    return X, failed


def solve_path(
    model: CoefficientModel,
    alpha: float,
    grid: TimeGrid,
    noise: np.ndarray,
    cfg: SchemeConfig = DEFAULT_SCHEME,
) -> Trajectory:
    """Solve one path from a single replica's increments (length ``n``)."""
    X, failed = solve_paths(model, alpha, grid, np.asarray(noise).reshape(1, -1), cfg)
    if failed[0]:
        step = int(np.argmax(~np.isfinite(X[0])))
        raise DivergenceError(f"non-finite state at step {step} (t={grid.nodes[step]:.6g})", step)
    return Trajectory(grid, alpha, X[0])


@dataclass(frozen=True)
class CoupledSolution:
    """Paths for several orders driven by identical increments.

    ``values[o, r]`` is the path of order ``orders[o]`` for replica ``r``.
    """

    grid: TimeGrid
    orders: tuple
    values: np.ndarray
    failed: np.ndarray

    @property
    def replicas(self) -> int:
        return self.values.shape[1]

    def trajectories(self, r: int) -> list[Trajectory]:
        return [Trajectory(self.grid, a, self.values[o, r]) for o, a in enumerate(self.orders)]

    def __getitem__(self, r: int) -> list[Trajectory]:
        return self.trajectories(r)

    def __len__(self) -> int:
        return self.replicas


def solve_coupled(
    model: CoefficientModel,
    orders: Sequence[float],
    grid: TimeGrid,
    noise: NoiseBatch,
    cfg: SchemeConfig = DEFAULT_SCHEME,
    threads: int = 1,
) -> CoupledSolution:
    orders = tuple(check_order(a, "order") for a in orders)

    def work(r0, r1):
        dB = noise.block(r0, r1)
        sols = [solve_paths(model, a, grid, dB, cfg) for a in orders]
        return np.stack([s[0] for s in sols]), np.any([s[1] for s in sols], axis=0)

    parts = map_chunks(work, noise.replicas, threads)
    values = concat([p[0] for p in parts], axis=1)
    failed = concat([p[1] for p in parts])
    return CoupledSolution(grid, orders, values, failed)


def picard_iterate(
    model: CoefficientModel,
    alpha: float,
    grid: TimeGrid,
    noise: np.ndarray,
    iterations: int,
    cfg: SchemeConfig = DEFAULT_SCHEME,
) -> Trajectory:
    """Picard iterate of the discrete fixed-point map, started from ``X = x0``."""
    alpha = check_order(alpha)
    if iterations < 1:
        raise DomainError("iterations must be >= 1")
    dB = np.asarray(noise, dtype=float).reshape(-1)
    n, h, t = grid.steps, grid.h, grid.nodes
    rg = 1.0 / math.gamma(alpha)
    W = specfun.toeplitz_lower(cfg.drift_weights(alpha, h, n) * rg)
    K = specfun.toeplitz_lower(cfg.diffusion_kernel(alpha, h, n) * rg)
    X = np.full(n + 1, float(model.x0))
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(iterations):
            F = np.array([model.b(t[j], X[j : j + 1])[0] for j in range(n)])
            G = np.array([model.sigma(t[j], X[j : j + 1])[0] for j in range(n)]) * dB
            X = model.x0 + W @ F + K @ G
            if not np.isfinite(X).all():
                step = int(np.argmax(~np.isfinite(X)))
                raise DivergenceError(f"Picard iterate diverged at step {step}", step)
    return Trajectory(grid, alpha, X)
