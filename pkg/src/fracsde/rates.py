"""Monte Carlo error curves in the fractional order and log-log rate fits.

Every curve couples the orders through common random numbers: for each
replica all orders are solved on the same grid from the same increments, and
the statistic of interest is formed per replica before averaging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DomainError, FitError
from .models import CoefficientModel
from .parallel import concat, map_chunks, tree_sum
from .paths import NoiseBatch, TimeGrid
from .solver import DEFAULT_SCHEME, SchemeConfig, check_order, solve_paths
from .variation import variation_paths

WEAK_BETA_MIN = 7.0 / 8.0
OUTSIDE = "outside paper hypothesis"


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    stderr: float
    m: int
    failures: int = 0

    @classmethod
    def from_samples(cls, values: np.ndarray) -> "MomentEstimate":
        """Mean and standard error over finite samples; non-finite ones count as failures."""
        v = np.asarray(values, dtype=float).reshape(-1)
        ok = np.isfinite(v)
        v = v[ok]
        m = v.shape[0]
        if m == 0:
            return cls(math.nan, math.nan, 0, int((~ok).sum()))
        # shift by the first sample so identical samples give an exact mean and zero error
        v0 = v[0]
        mean = float(v0 + tree_sum(v - v0) / m)
        se = 0.0
        if m > 1:
            se = math.sqrt(float(tree_sum((v - mean) ** 2)) / (m - 1) / m)
        return cls(mean, se, m, int((~ok).sum()))


@dataclass(frozen=True)
class RateFit:
    log_x: np.ndarray
    log_y: np.ndarray
    slope: float
    intercept: float
    slope_se: float
    r2: float

    def summary(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "slope_se": self.slope_se, "r2": self.r2}


def fit_loglog(x: Sequence[float], y: Sequence[float]) -> RateFit:
    """Ordinary least squares of log y on log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise FitError("log-log fit needs strictly positive values")
    keep = np.isfinite(x) & np.isfinite(y)
    if keep.sum() < 3:
        raise FitError(f"log-log fit needs at least 3 finite points, got {int(keep.sum())}")
    lx, ly = np.log(x[keep]), np.log(y[keep])
    n = lx.shape[0]
    xm, ym = lx.mean(), ly.mean()
    sxx = float(np.sum((lx - xm) ** 2))
    if sxx == 0:
        raise FitError("log-log fit needs at least two distinct abscissae")
    slope = float(np.sum((lx - xm) * (ly - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = ly - (intercept + slope * lx)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((ly - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    slope_se = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else math.nan
    return RateFit(lx, ly, slope, intercept, slope_se, r2)


@dataclass
class ErrorCurve:
    kind: str
    beta: float
    deltas: np.ndarray
    alphas: np.ndarray
    estimates: list
    fit: RateFit | None
    tags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return np.array([abs(e.mean) for e in self.estimates])

    def table(self) -> dict:
        cols = {
            "delta": self.deltas,
            "alpha": self.alphas,
            "error": self.errors,
            "stderr": np.array([e.stderr for e in self.estimates]),
            "m": np.array([e.m for e in self.estimates]),
        }
        cols.update({k: np.asarray(v) for k, v in self.extra.items() if np.ndim(v) == 1})
        return cols


def _alphas(beta, deltas, side):
    beta = check_order(beta, "beta")
    deltas = np.asarray(deltas, dtype=float)
    if side not in (-1, 1):
        raise DomainError("side must be -1 or +1")
    alphas = beta + side * deltas
    for a in alphas:
        check_order(a, "alpha = beta +/- delta")
    return beta, deltas, alphas


def _fit_or_raise(deltas, errors, required=True):
    try:
        return fit_loglog(deltas, errors)
    except FitError:
        if required:
            raise FitError("degenerate error curve: fewer than 3 positive finite points") from None
        return None


def _coupled_statistics(model, beta, alphas, grid, noise, cfg, threads, stat):
    """Concatenate ``stat(Xb, [Xa...], dB)`` over chunks; failed replicas become NaN rows."""

    def work(r0, r1):
        dB = noise.block(r0, r1)
        Xb, fb = solve_paths(model, beta, grid, dB, cfg)
        sols = [solve_paths(model, a, grid, dB, cfg) for a in alphas]
        failed = fb | np.any([s[1] for s in sols], axis=0) if sols else fb
        out = np.asarray(stat(Xb, [s[0] for s in sols], dB), dtype=float)
        out[failed] = np.nan
        return out

    return concat(map_chunks(work, noise.replicas, threads))


def strong_error_curve(
    model: CoefficientModel,
    beta: float,
    deltas: Sequence[float],
    p: float,
    t: float,
    grid: TimeGrid,
    noise: NoiseBatch,
    cfg: SchemeConfig = DEFAULT_SCHEME,
    threads: int = 1,
    side: int = -1,
) -> ErrorCurve:
    """E|X_{alpha,t} - X_{beta,t}|^p for alpha = beta + side*delta; expected slope p."""
    if p < 2:
        raise DomainError(f"moment p={p!r} must be >= 2")
    beta, deltas, alphas = _alphas(beta, deltas, side)
    k = grid.index_of(t)

    def stat(Xb, Xas, dB):
        return np.stack([np.abs(Xa[:, k] - Xb[:, k]) ** p for Xa in Xas], axis=1)

    vals = _coupled_statistics(model, beta, alphas, grid, noise, cfg, threads, stat)
    est = [MomentEstimate.from_samples(vals[:, c]) for c in range(len(deltas))]
    curve = ErrorCurve("strong", beta, deltas, alphas, est, None)
    curve.fit = _fit_or_raise(deltas, curve.errors)
    curve.extra["expected_slope"] = float(p)
    return curve


def variation_error_curve(
    model: CoefficientModel,
    beta: float,
    deltas: Sequence[float],
    p: float,
    t: float | None,
    grid: TimeGrid,
    noise: NoiseBatch,
    cfg: SchemeConfig = DEFAULT_SCHEME,
    threads: int = 1,
    side: int = -1,
) -> ErrorCurve:
    """E|(X_alpha - X_beta)/(alpha - beta) - Y_beta|^p at ``t``, or the sup over nodes if ``t`` is None.

    Expected slope is p times the Hoelder exponent of the coefficient derivatives.
    """
    if p < 2:
        raise DomainError(f"moment p={p!r} must be >= 2")
    beta, deltas, alphas = _alphas(beta, deltas, side)
    sup = t is None
    k = None if sup else grid.index_of(t)

    def stat(Xb, Xas, dB):
        Y = variation_paths(model, beta, grid, Xb, dB, cfg)
        cols = []
        for Xa, a in zip(Xas, alphas):
            z = np.abs((Xa - Xb) / (a - beta) - Y) ** p
            cols.append(z if sup else z[:, k])
        return np.stack(cols, axis=1)

    vals = _coupled_statistics(model, beta, alphas, grid, noise, cfg, threads, stat)
    if sup:
        est = []
        worst_nodes = []
        for c in range(len(deltas)):
            per_node = [MomentEstimate.from_samples(vals[:, c, q]) for q in range(vals.shape[2])]
            q = int(np.nanargmax([e.mean for e in per_node]))
            est.append(per_node[q])
            worst_nodes.append(grid.nodes[q])
    else:
        est = [MomentEstimate.from_samples(vals[:, c]) for c in range(len(deltas))]
    curve = ErrorCurve("variation", beta, deltas, alphas, est, None)
    if sup:
        curve.extra["t_sup"] = np.array(worst_nodes)
    curve.fit = _fit_or_raise(deltas, curve.errors)
    curve.extra["expected_slope"] = float(p * model.holder_delta)
    return curve


def weak_error_curve(
    model: CoefficientModel,
    beta: float,
    deltas: Sequence[float],
    g: Callable,
    t: float,
    grid: TimeGrid,
    noise: NoiseBatch,
    cfg: SchemeConfig = DEFAULT_SCHEME,
    threads: int = 1,
    side: int = -1,
) -> ErrorCurve:
    """|E g(X_alpha,t) - E g(X_beta,t)| from per-replica g-differences; reports error/|alpha-beta|."""
    if not model.sigma0 > 0:
        raise ContractError(f"model {model.name!r} declares no ellipticity bound sigma0 > 0")
    if not math.isfinite(getattr(g, "sup_norm", math.inf)):
        raise DomainError("weak errors need a bounded test function")
    beta, deltas, alphas = _alphas(beta, deltas, side)
    k = grid.index_of(t)

    def stat(Xb, Xas, dB):
        gb = g(Xb[:, k])
        return np.stack([g(Xa[:, k]) - gb for Xa in Xas], axis=1)

    vals = _coupled_statistics(model, beta, alphas, grid, noise, cfg, threads, stat)
    est = [MomentEstimate.from_samples(vals[:, c]) for c in range(len(deltas))]
    curve = ErrorCurve("weak", beta, deltas, alphas, est, None)
    if beta < WEAK_BETA_MIN:
        curve.tags.append(OUTSIDE)
    curve.fit = _fit_or_raise(deltas, curve.errors, required=False)
    if curve.fit is None:
        curve.tags.append("degenerate")
    curve.extra["ratio"] = curve.errors / deltas
    curve.extra["ratio_stderr"] = np.array([e.stderr for e in est]) / deltas
    curve.extra["signed_difference"] = np.array([e.mean for e in est])
    curve.extra["expected_slope"] = 1.0
    return curve


@dataclass
class WeakDerivativeReport:
    beta: float
    t: float
    deltas: np.ndarray
    central: list          # MomentEstimate per delta
    diagonal: list         # MomentEstimate per Richardson level
    estimate: float
    stderr: float
    extrapolation_error: float
    contracted: bool
    tags: list = field(default_factory=list)

    def table(self) -> dict:
        return {
            "delta": self.deltas,
            "central_difference": np.array([e.mean for e in self.central]),
            "central_stderr": np.array([e.stderr for e in self.central]),
            "richardson": np.array([e.mean for e in self.diagonal]),
            "richardson_stderr": np.array([e.stderr for e in self.diagonal]),
        }


def richardson_weights(levels: int, ratio: float = 2.0, order: int = 2) -> np.ndarray:
    """Row ``i`` gives the coefficients of the level-``i`` diagonal Richardson estimate.

    Assumes an error expansion in powers ``order, 2*order, ...`` of the step.
    """
    T = [[np.eye(levels)[i]] for i in range(levels)]
    for j in range(1, levels):
        f = ratio ** (order * j)
        for i in range(j, levels):
            T[i].append(T[i][j - 1] + (T[i][j - 1] - T[i - 1][j - 1]) / (f - 1.0))
    return np.array([T[i][i] for i in range(levels)])


def weak_derivative_estimate(
    model: CoefficientModel,
    beta: float,
    t: float,
    g: Callable,
    grid: TimeGrid,
    noise: NoiseBatch,
    deltas: Sequence[float],
    cfg: SchemeConfig = DEFAULT_SCHEME,
    threads: int = 1,
    tol: float = 1e-6,
    z: float = 3.0,
    rho: float = 0.5,
) -> WeakDerivativeReport:
    """Richardson-extrapolated central differences of E g(X_alpha,t) in alpha at beta.

    ``deltas`` must shrink by a constant ratio.  With ``d_i`` the diagonal
    Richardson estimates and ``s_i = |d_i - d_(i-1)|`` their steps, the sequence
    is declared contracted when every step is at most ``rho`` times the one
    before, and a lone step is within tolerance, each up to ``z`` standard
    errors (of the per-replica step) plus ``tol * (1 + |d|)``.
    """
    if not getattr(g, "continuous", True):
        raise DomainError("the order-derivative of E g(X) is only claimed for continuous g")
    beta = check_order(beta, "beta")
    deltas = np.asarray(deltas, dtype=float)
    if deltas.shape[0] < 2:
        raise DomainError("need at least two deltas")
    ratios = deltas[:-1] / deltas[1:]
    if not np.allclose(ratios, ratios[0], rtol=1e-12) or ratios[0] <= 1:
        raise DomainError("deltas must decrease geometrically")
    for d in deltas:
        check_order(beta + d, "beta + delta")
        check_order(beta - d, "beta - delta")
    k = grid.index_of(t)
    orders = [a for d in deltas for a in (beta + d, beta - d)]
    L = len(deltas)
    Wr = richardson_weights(L, float(ratios[0]), 2)

    def stat(Xb, Xas, dB):
        cd = np.stack(
            [(g(Xas[2 * i][:, k]) - g(Xas[2 * i + 1][:, k])) / (2 * d) for i, d in enumerate(deltas)], axis=1
        )
        diag = cd @ Wr.T
        return np.concatenate([cd, diag, np.diff(diag, axis=1)], axis=1)

    vals = _coupled_statistics(model, beta, orders, grid, noise, cfg, threads, stat)
    central = [MomentEstimate.from_samples(vals[:, i]) for i in range(L)]
    diag = [MomentEstimate.from_samples(vals[:, L + i]) for i in range(L)]
    steps = [MomentEstimate.from_samples(vals[:, 2 * L + i]) for i in range(L - 1)]
    slack = [z * s.stderr + tol * (1.0 + abs(diag[-1].mean)) for s in steps]
    size = [abs(s.mean) for s in steps]
    if L == 2:
        contracted = size[0] <= slack[0]
    else:
        contracted = all(size[i + 1] <= rho * size[i] + slack[i + 1] for i in range(L - 2))
    tags = [] if contracted else ["inconclusive"]
    return WeakDerivativeReport(
        beta, float(t), deltas, central, diag, diag[-1].mean, diag[-1].stderr, size[-1], bool(contracted), tags
    )


@dataclass
class MomentScan:
    orders: tuple
    p: float
    t: float
    estimates: list

    @property
    def max_min_ratio(self) -> float:
        means = [e.mean for e in self.estimates]
        return max(means) / min(means) if min(means) > 0 else math.inf

    def table(self) -> dict:
        return {
            "order": np.array(self.orders),
            "moment": np.array([e.mean for e in self.estimates]),
            "stderr": np.array([e.stderr for e in self.estimates]),
            "m": np.array([e.m for e in self.estimates]),
            "failures": np.array([e.failures for e in self.estimates]),
        }


def moment_scan(
    model: CoefficientModel,
    orders: Sequence[float],
    p: float,
    t: float,
    grid: TimeGrid,
    noise: NoiseBatch,
    cfg: SchemeConfig = DEFAULT_SCHEME,
    threads: int = 1,
) -> MomentScan:
    """E|X_{alpha,t}|^p for each order."""
    if p < 2:
        raise DomainError(f"moment p={p!r} must be >= 2")
    orders = tuple(check_order(a, "order") for a in orders)
    k = grid.index_of(t)

    def work(r0, r1):
        dB = noise.block(r0, r1)
        cols = []
        for a in orders:
            X, failed = solve_paths(model, a, grid, dB, cfg)
            v = np.abs(X[:, k]) ** p
            v[failed] = np.nan
            cols.append(v)
        return np.stack(cols, axis=1)

    vals = concat(map_chunks(work, noise.replicas, threads))
    est = [MomentEstimate.from_samples(vals[:, c]) for c in range(len(orders))]
    return MomentScan(orders, float(p), float(t), est)
