"""First-variation process: sensitivity of the solution to the fractional order.

The discrete process is the exact ``beta``-derivative of the Volterra-Euler
scheme in :mod:`fracsde.solver`: differentiating the scheme's weights in the
order produces the log-kernel weights, and ``d/dbeta 1/Gamma(beta)`` produces
``-psi(beta) (X_k - x0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from .errors import DivergenceError, DomainError
from .models import CoefficientModel
from .paths import TimeGrid
from .solver import DEFAULT_SCHEME, SchemeConfig, Trajectory, check_order, pad_columns


@dataclass(frozen=True)
class VariationRun:
    base: Trajectory
    variation: np.ndarray

    @property
    def grid(self) -> TimeGrid:
        return self.base.grid


def variation_paths(
    model: CoefficientModel,
    beta: float,
    grid: TimeGrid,
    X: np.ndarray,
    increments: np.ndarray,
    cfg: SchemeConfig = DEFAULT_SCHEME,
) -> np.ndarray:
    """Batch version of :func:`solve_first_variation`; ``X`` is ``(m, n+1)``."""
    beta = check_order(beta, "beta")
    X = np.atleast_2d(X)
    dB = np.atleast_2d(np.asarray(increments, dtype=float))
    m, n = dB.shape
    h, t = grid.h, grid.nodes
    rg = 1.0 / math.gamma(beta)
    rev = lambda v: (v * rg)[::-1].copy()
    w = rev(cfg.drift_weights(beta, h, n))
    wl = rev(cfg.drift_log_weights(beta, h, n))
    kap = rev(cfg.diffusion_kernel(beta, h, n))
    kl = rev(cfg.diffusion_log_kernel(beta, h, n))
    psi = float(digamma(beta))

    XT = pad_columns(X.T)
    dBT = pad_columns(dB.T)
    mp = XT.shape[1]
    Fb = np.empty((n, mp))   # b_j
    Fs = np.empty((n, mp))   # sigma_j dB_j
    Lb = np.empty((n, mp))   # db_j Y_j
    Ls = np.empty((n, mp))   # dsigma_j Y_j dB_j
    YT = np.zeros((n + 1, mp))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n + 1):
            j = k - 1
            xj = XT[j]
            Fb[j] = model.b(t[j], xj)
            Fs[j] = model.sigma(t[j], xj) * dBT[j]
            Lb[j] = model.db(t[j], xj) * YT[j]
            Ls[j] = model.dsigma(t[j], xj) * YT[j] * dBT[j]
            s = n - k
            YT[k] = (
                -psi * (XT[k] - model.x0)
                + wl[s:] @ Fb[:k] + w[s:] @ Lb[:k]
                + kl[s:] @ Fs[:k] + kap[s:] @ Ls[:k]
            )
    return np.ascontiguousarray(YT[:, :m].T)


def solve_first_variation(
    model: CoefficientModel,
    beta: float,
    base: Trajectory,
    noise: np.ndarray,
    cfg: SchemeConfig = DEFAULT_SCHEME,
) -> VariationRun:
    """Discretize the first-variation equation along ``base`` (solved on the same ``noise``)."""
    if base.order != beta:
        raise DomainError(f"base trajectory has order {base.order}, expected {beta}")
    Y = variation_paths(model, beta, base.grid, base.values[None, :], np.reshape(noise, (1, -1)), cfg)[0]
    if not np.isfinite(Y).all():
        step = int(np.argmax(~np.isfinite(Y)))
        raise DivergenceError(f"first variation diverged at step {step}", step)
    return VariationRun(base, Y)


def difference_quotient(x_alpha: Trajectory, x_beta: Trajectory) -> np.ndarray:
    """Pointwise (X_alpha - X_beta) / (alpha - beta) on a common grid."""
    if x_alpha.order == x_beta.order:
        raise DomainError("difference quotient needs distinct orders")
    if x_alpha.grid != x_beta.grid:
        raise DomainError("trajectories live on different grids")
    return (x_alpha.values - x_beta.values) / (x_alpha.order - x_beta.order)
