"""Gamma-function family, singular-kernel integrals and discretization weights.

Every kernel here is a function of the *lag* ``u = t - s``; the singularity of
``(t - s)**(alpha - 1)`` then sits at ``u = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy import integrate, optimize, special

from .errors import DomainError, QuadratureError

KernelKind = Literal["plain", "log"]

#: sup of |Gamma'| over [1/2, 1]; Gamma'' > 0 so |Gamma'| peaks at 1/2.
GAMMA_PRIME_SUP = math.sqrt(math.pi) * (np.euler_gamma + 2.0 * math.log(2.0))


@dataclass(frozen=True)
class GammaTriple:
    value: float
    d1: float
    d2: float


def _check_order(alpha, name="alpha", lo=0.5, hi=1.0):
    if not (math.isfinite(alpha) and lo < alpha <= hi):
        raise DomainError(f"{name}={alpha!r} must lie in ({lo}, {hi}]")


def gamma_eval(alpha: float) -> GammaTriple:
    """Gamma(alpha) with its first two derivatives.

    Uses Gamma' = Gamma*psi and Gamma'' = Gamma*(psi**2 + psi_1) with the
    digamma psi and trigamma psi_1.
    """
    alpha = float(alpha)
    if not math.isfinite(alpha) or alpha <= 0.0:
        raise DomainError(f"gamma_eval needs a positive finite argument, got {alpha!r}")
    g = float(special.gamma(alpha))
    psi = float(special.digamma(alpha))
    psi1 = float(special.polygamma(1, alpha))
    return GammaTriple(value=g, d1=g * psi, d2=g * (psi * psi + psi1))


def gamma_argmin() -> float:
    """Location of the minimum of Gamma on the positive axis (root of digamma in (1, 2))."""
    return optimize.brentq(special.digamma, 1.0, 2.0, xtol=1e-16, rtol=4 * np.finfo(float).eps)


def inv_gamma_diff(alpha: float, beta: float) -> tuple[float, float]:
    """Return ``(|1/Gamma(alpha) - 1/Gamma(beta)|, GAMMA_PRIME_SUP * |alpha - beta|)``."""
    _check_order(alpha, "alpha")
    _check_order(beta, "beta")
    lhs = abs(special.rgamma(alpha) - special.rgamma(beta))
    return float(lhs), GAMMA_PRIME_SUP * abs(alpha - beta)


def singular_quad(f: Callable[[float], float], t: float, tol: float = 1e-12) -> float:
    """Integrate ``f(u)`` over the lag interval ``(0, t)``.

    ``f`` is written in the lag ``u = t - s`` so that an integrable endpoint
    singularity such as ``u**c * log(u)**k`` (c > -1) sits at the origin.
    """
    if not t > 0:
        raise DomainError(f"t must be positive, got {t!r}")
    if not (1e-14 < tol < 1e-2):
        raise DomainError(f"tol={tol!r} must lie in (1e-14, 1e-2)")
    res = integrate.quad(f, 0.0, t, epsabs=0.0, epsrel=tol, limit=500, full_output=1)
    value, abserr = res[0], res[1]
    if len(res) > 3:
        raise QuadratureError(f"quadrature did not converge: {res[3]}", value, abserr)
    return float(value)


def _second_difference_series(m: float, d: float, L: float) -> float:
    """F(m+d) - 2F(m) + F(m-d) for F(x) = e^(xL)/x, summed as its even Taylor series in d.

    With r = d/m and q = d L the n-th Taylor coefficient times d^n is
    e^(mL)/m * c_n, where c_n = sum_j (-r)^(n-j) q^j/j! obeys c_n = -r c_(n-1) + q^n/n!.
    """
    r, q = d / m, d * L
    c, qn, total = 1.0, 1.0, 0.0
    for n in range(1, 400):
        qn *= q / n
        c = -r * c + qn
        if n % 2 == 0:
            total += c
            if abs(c) <= 1e-17 * abs(total):
                break
    return 2.0 * math.exp(m * L) / m * total


def kernel_l2_diff(alpha: float, beta: float, t: float) -> float:
    """Closed form of the integral of ((t-s)^(alpha-1) - (t-s)^(beta-1))^2 over (0, t)."""
    _check_order(alpha, "alpha")
    _check_order(beta, "beta")
    if not t > 0:
        raise DomainError(f"t must be positive, got {t!r}")
    if alpha == beta:
        return 0.0
    m = alpha + beta - 1.0
    d = alpha - beta
    L = math.log(t)
    if abs(d) * (1.0 / m + abs(L)) < 0.5:
        # the closed form cancels catastrophically here; sum its even Taylor series in d instead
        return _second_difference_series(m, d, L)
    a2, b2, ab = 2 * alpha - 1, 2 * beta - 1, alpha + beta - 1
    val = t**a2 / a2 - 2.0 * t**ab / ab + t**b2 / b2
    return max(val, 0.0)


# -- discretization weights, indexed by lag l = k - j = 1..n ----------------


def plain_lag_weights(alpha: float, h: float, n: int) -> np.ndarray:
    """Exact cell integrals of u^(alpha-1) over [(l-1)h, lh], l = 1..n."""
    l = np.arange(n + 1, dtype=float)
    p = l**alpha
    return h**alpha * np.diff(p) / alpha


def log_lag_weights(alpha: float, h: float, n: int) -> np.ndarray:
    """Exact cell integrals of u^(alpha-1) log(u) over [(l-1)h, lh], l = 1..n.

    Antiderivative ``u^alpha log(u)/alpha - u^alpha/alpha^2`` (zero at u = 0).
    """
    l = np.arange(n + 1, dtype=float)
    p = l**alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        logl = np.where(l > 0, np.log(np.where(l > 0, l, 1.0)), 0.0)
    F = p * (math.log(h) + logl) / alpha - p / alpha**2
    F[0] = 0.0
    return h**alpha * np.diff(F)


def left_point_kernel(alpha: float, h: float, n: int) -> np.ndarray:
    """(l h)^(alpha-1) for l = 1..n."""
    l = np.arange(1, n + 1, dtype=float)
    return h ** (alpha - 1.0) * l ** (alpha - 1.0)


def left_point_log_kernel(alpha: float, h: float, n: int) -> np.ndarray:
    """alpha-derivative of :func:`left_point_kernel`: (l h)^(alpha-1) log(l h)."""
    l = np.arange(1, n + 1, dtype=float)
    return h ** (alpha - 1.0) * l ** (alpha - 1.0) * (math.log(h) + np.log(l))


def l2_lag_kernel(alpha: float, h: float, n: int) -> np.ndarray:
    """Cell-RMS kernel: kappa_l^2 h equals the exact integral of u^(2alpha-2) over the cell."""
    c = 2.0 * alpha - 1.0
    l = np.arange(n + 1, dtype=float)
    a = np.diff(l**c) / c
    return np.sqrt(h ** (2.0 * alpha - 2.0) * a)


def l2_lag_log_kernel(alpha: float, h: float, n: int) -> np.ndarray:
    """alpha-derivative of :func:`l2_lag_kernel`."""
    c = 2.0 * alpha - 1.0
    l = np.arange(n + 1, dtype=float)
    p = l**c
    with np.errstate(divide="ignore", invalid="ignore"):
        pl = np.where(l > 0, p * np.log(np.where(l > 0, l, 1.0)), 0.0)
    dp = np.diff(p)
    ratio = np.diff(pl) / dp
    return l2_lag_kernel(alpha, h, n) * (math.log(h) + ratio - 1.0 / c)


@dataclass(frozen=True)
class KernelWeights:
    """Lower-triangular matrix ``matrix[k, j]`` (k = 0..n, j = 0..n-1), zero for j >= k."""

    order: float
    kind: KernelKind
    matrix: np.ndarray

    @property
    def by_lag(self) -> np.ndarray:
        return self.matrix[-1, ::-1].copy()


def toeplitz_lower(lag_values: np.ndarray) -> np.ndarray:
    n = lag_values.shape[0]
    k = np.arange(n + 1)[:, None]
    j = np.arange(n)[None, :]
    lag = k - j
    out = np.zeros((n + 1, n))
    mask = lag >= 1
    out[mask] = lag_values[lag[mask] - 1]
    return out


def kernel_weights(alpha: float, grid, kind: KernelKind = "plain") -> KernelWeights:
    """Per-cell integrals of the kernel against every evaluation node of ``grid``."""
    _check_order(alpha)
    if kind == "plain":
        lag = plain_lag_weights(alpha, grid.h, grid.steps)
    elif kind == "log":
        lag = log_lag_weights(alpha, grid.h, grid.steps)
    else:
        raise DomainError(f"unknown kernel kind {kind!r}")
    return KernelWeights(order=alpha, kind=kind, matrix=toeplitz_lower(lag))
