"""Malliavin derivatives of the discrete solution on the source-time grid.

``D[i, k]`` is the sensitivity of ``X_k`` to the Brownian increment on cell
``i`` (``theta_i = t_i``), i.e. the exact noise derivative of the Volterra-Euler
scheme.  It solves, for ``k > i``,

    D[i, k] = (1/Gamma) [ kappa_{k-i} sigma_i
                          + sum_{i<j<k} (w_{k-j} b'_j + kappa_{k-j} sigma'_j dB_j) D[i, j] ]

and vanishes for ``k <= i``.  The second derivative follows by differentiating
that recursion once more.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError, SizeError
from .models import CoefficientModel
from .parallel import concat, map_chunks, tree_sum
from .paths import NoiseBatch, TimeGrid
from .solver import DEFAULT_SCHEME, SchemeConfig, Trajectory, check_order, solve_paths

SECOND_DERIVATIVE_CAP = 128


@dataclass(frozen=True)
class MalliavinGrid:
    grid: TimeGrid
    order: float
    D: np.ndarray  # (n+1, n+1), D[i, k]

    def triples(self):
        """(theta, t, D) for every source/evaluation pair with theta < t."""
        t = self.grid.nodes
        i, k = np.nonzero(np.triu(np.ones_like(self.D, dtype=bool), 1))
        return t[i], t[k], self.D[i, k]


@dataclass(frozen=True)
class SecondDerivGrid:
    grid: TimeGrid
    order: float
    D2: np.ndarray  # (n+1, n+1, n+1), D2[r, i, k]


def _coefficients(model, alpha, grid, x, dB, cfg):
    n, h, t = grid.steps, grid.h, grid.nodes
    rg = 1.0 / math.gamma(alpha)
    w = cfg.drift_weights(alpha, h, n) * rg
    kap = cfg.diffusion_kernel(alpha, h, n) * rg
    j = np.arange(n)
    sig = np.array([model.sigma(t[q], x[q : q + 1])[0] for q in j])
    db = np.array([model.db(t[q], x[q : q + 1])[0] for q in j])
    ds = np.array([model.dsigma(t[q], x[q : q + 1])[0] for q in j])
    return w, kap, sig, db, ds


def _lag_matrix(vec, n):
    """M[k, j] = vec[k-j-1] for j < k <= n, zero otherwise."""
    k = np.arange(n + 1)[:, None]
    j = np.arange(n)[None, :]
    lag = k - j
    out = np.zeros((n + 1, n))
    mask = lag >= 1
    out[mask] = vec[lag[mask] - 1]
    return out


def solve_first_derivative(
    model: CoefficientModel,
    alpha: float,
    base: Trajectory,
    noise: np.ndarray,
    cfg: SchemeConfig = DEFAULT_SCHEME,
) -> MalliavinGrid:
    """Lower-triangular Malliavin grid along ``base``; O(n^3/6) work, O(n^2) memory."""
    alpha = check_order(alpha)
    grid = base.grid
    n = grid.steps
    dB = np.asarray(noise, dtype=float).reshape(-1)
    w, kap, sig, db, ds = _coefficients(model, alpha, grid, base.values, dB, cfg)
    W = _lag_matrix(w, n)
    K = _lag_matrix(kap, n)
    C = W * db[None, :] + K * (ds * dB)[None, :]  # C[k, j]
    src = K * sig[None, :]                         # src[k, i]
    D = np.zeros((n + 1, n + 1))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n + 1):
            # rows i < k; D[i, j] is zero unless i < j < k
            D[:k, k] = src[k, :k] + D[:k, :k] @ C[k, :k]
    if not np.isfinite(D).all():
        raise ContractError("Malliavin grid became non-finite")
    return MalliavinGrid(grid, alpha, D)


def norm_weights(alpha: float, h: float, k: int) -> np.ndarray:
    """Quadrature weights q_i, i < k, for the theta-integral of |D_theta X_{t_k}|^2.

    Product integration against the kernel's own singularity: on the cell
    [t_i, t_{i+1}] the integrand is taken as (t_k - theta)^(2 alpha - 2) times
    its (smooth) value relative to the kernel at the node.
    """
    c = 2.0 * alpha - 1.0
    lag = np.arange(k, 0, -1, dtype=float)  # lag of source i = 0..k-1
    cell = (lag**c - (lag - 1.0) ** c) / c
    return h * cell / lag ** (2.0 * alpha - 2.0)


def sobolev_norm_sq(first: MalliavinGrid, k: int) -> float:
    """Squared L2[0, t_k] norm of theta -> D_theta X_{t_k}."""
    if not 0 <= k <= first.grid.steps:
        raise DomainError(f"node index {k} outside the grid")
    if k == 0:
        return 0.0
    q = norm_weights(first.order, first.grid.h, k)
    return float(np.dot(q, first.D[:k, k] ** 2))


def solve_second_derivative(
    model: CoefficientModel,
    alpha: float,
    base: Trajectory,
    first: MalliavinGrid,
    noise: np.ndarray,
    cap: int = SECOND_DERIVATIVE_CAP,
    cfg: SchemeConfig = DEFAULT_SCHEME,
) -> SecondDerivGrid:
    """Second Malliavin derivative ``D2[r, i, k]``; O(n^4) work, O(n^3) memory."""
    alpha = check_order(alpha)
    grid = base.grid
    n = grid.steps
    if n > cap:
        raise SizeError(f"second-derivative grid n={n} exceeds cap {cap}")
    if not model.has_second_derivatives:
        raise ContractError(f"model {model.name!r} does not expose second x-derivatives")
    dB = np.asarray(noise, dtype=float).reshape(-1)
    t, x = grid.nodes, base.values
    w, kap, sig, db, ds = _coefficients(model, alpha, grid, x, dB, cfg)
    d2b = np.array([model.d2b(t[q], x[q : q + 1])[0] for q in range(n)])
    d2s = np.array([model.d2sigma(t[q], x[q : q + 1])[0] for q in range(n)])
    W = _lag_matrix(w, n)
    K = _lag_matrix(kap, n)
    C = W * db[None, :] + K * (ds * dB)[None, :]
    E = W * d2b[None, :] + K * (d2s * dB)[None, :]
    S = K * ds[None, :]  # S[k, m] = kappa_{k-m} sigma'_m
    D = first.D
    Z = np.zeros((n + 1, n + 1, n + 1))  # Z[k, r, i]
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n + 1):
            # explicit sources: sigma' at the later of the two perturbation times
            M = D[:, :k] * S[k, :k][None, :]
            acc = np.zeros((n + 1, n + 1))
            acc[:, :k] = M
            acc += acc.T
            Dk = D[:, :k]
            acc += (Dk * E[k, :k][None, :]) @ Dk.T
            acc += np.tensordot(C[k, :k], Z[:k], axes=1)
            Z[k] = acc
    if not np.isfinite(Z).all():
        raise ContractError("second-derivative grid became non-finite")
    return SecondDerivGrid(grid, alpha, np.moveaxis(Z, 0, -1))


def second_norm_sq(second: SecondDerivGrid, k: int) -> float:
    """h^2-weighted double sum of |D_r D_theta X_{t_k}|^2 over r, theta < t_k."""
    h = second.grid.h
    block = second.D2[:k, :k, k]
    return float(h * h * np.sum(block * block))


def _check_gamma_window(alpha, gamma):
    return 1.0 < gamma <= 1.0 / (2.0 - 2.0 * alpha) if alpha < 1 else gamma > 1.0


@dataclass(frozen=True)
class InverseMomentEstimate:
    t: float
    gamma: float
    mean: float
    stderr: float
    replicas: int
    min_norm_sq: float
    inside_hypothesis: bool


def inverse_moment_scan(
    model: CoefficientModel,
    alpha: float,
    grid: TimeGrid,
    noise: NoiseBatch,
    gamma: float,
    times,
    cfg: SchemeConfig = DEFAULT_SCHEME,
    threads: int = 1,
) -> list[InverseMomentEstimate]:
    """MC estimates of E ||D X_{alpha,t}||^{-2 gamma} for each t in ``times``."""
    alpha = check_order(alpha)
    if not model.sigma0 > 0:
        raise ContractError(f"model {model.name!r} declares no ellipticity bound sigma0 > 0")
    ks = [grid.index_of(t) for t in times]
    if min(ks) < 1:
        raise DomainError("inverse moments need t > 0")
    shared = _state_free(model)

    def work(r0, r1):
        dB = noise.block(r0, r1)
        X, failed = solve_paths(model, alpha, grid, dB, cfg)
        out = np.full((r1 - r0, len(ks)), np.nan)
        first_ok = None
        for r in range(r1 - r0):
            if failed[r]:
                continue
            if shared and first_ok is not None:
                out[r] = out[first_ok]
                continue
            first_ok = r
            mg = solve_first_derivative(model, alpha, Trajectory(grid, alpha, X[r]), dB[r], cfg)
            out[r] = [sobolev_norm_sq(mg, k) for k in ks]
        return out

    norms = concat(map_chunks(work, noise.replicas, threads, chunk=256))
    ok = np.isfinite(norms).all(axis=1)
    norms = norms[ok]
    if norms.size == 0 or np.min(norms) <= 0:
        raise ContractError("a replica produced a zero Malliavin norm")
    inside = _check_gamma_window(alpha, gamma)
    res = []
    for c, t in enumerate(times):
        v = norms[:, c] ** (-gamma)
        mean, se = _mean_se(v)
        res.append(InverseMomentEstimate(float(t), gamma, mean, se, int(ok.sum()), float(norms[:, c].min()), inside))
    return res


def _state_free(model: CoefficientModel) -> bool:
    # D is noise-independent when sigma and b' are constant in x and sigma' vanishes
    probe = np.array([-3.0, -0.5, 0.0, 0.7, 2.5])
    const = all(np.ptp(f(s, probe)) == 0.0 for f in (model.sigma, model.db) for s in (0.0, 0.5))
    return const and not np.any(model.dsigma(0.0, probe)) and not np.any(model.dsigma(0.5, probe))


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    m = v.shape[0]
    v0 = v[0]
    mean = v0 + float(tree_sum(v - v0)) / m
    if m < 2:
        return mean, 0.0
    var = float(tree_sum((v - mean) ** 2)) / (m - 1)
    return mean, math.sqrt(var / m)


def inverse_moment_estimate(model, alpha, grid, noise, gamma, t, cfg=DEFAULT_SCHEME, threads=1) -> InverseMomentEstimate:
    return inverse_moment_scan(model, alpha, grid, noise, gamma, [t], cfg, threads)[0]
