"""Explicit bounds for the singular Gronwall inequality

    v(t) <= omega(t) + a * int_0^t (t - s)^(eta - 1) v(s) ds,   0 < eta < 1,

and a numerical check that they dominate discrete solutions.  ``eta = 1`` is
accepted as the classical limit case (see :attr:`GronwallProblem.limit_case`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .errors import ContractError, DomainError, QuadratureError, SeriesError
from .specfun import plain_lag_weights, singular_quad

TERM_CAP = 200


@dataclass(frozen=True)
class GronwallProblem:
    a: float
    eta: float
    horizon: float
    omega: Callable[[np.ndarray], np.ndarray]
    monotone: bool = False
    steps: int = 256

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0):
            raise DomainError(f"a={self.a!r} must be positive")
        if not (0.0 < self.eta <= 1.0):
            raise DomainError(f"eta={self.eta!r} must lie in (0, 1); 1 is accepted as a limit case")
        if not self.horizon > 0:
            raise DomainError(f"horizon={self.horizon!r} must be positive")
        if self.steps < 1:
            raise DomainError("steps must be >= 1")

    @property
    def limit_case(self) -> bool:
        """True for eta = 1, the classical (non-singular) kernel."""
        return self.eta == 1.0

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1) * (self.horizon / self.steps)

    def omega_at(self, t) -> np.ndarray:
        w = np.asarray(self.omega(np.asarray(t, dtype=float)), dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("omega must be finite and non-negative")
        return w

    def _check_t(self, t):
        if not (0.0 <= t <= self.horizon * (1 + 1e-14)):
            raise DomainError(f"t={t!r} outside [0, {self.horizon}]")


def monotone_bound(problem: GronwallProblem, t: float) -> float:
    """2 omega(t) exp(4^(2/eta) a^(2/eta) t^2 / eta^(2/eta)), valid for non-decreasing omega."""
    if not problem.monotone:
        raise ContractError("monotone bound requires omega declared non-decreasing")
    problem._check_t(t)
    w = float(problem.omega_at(t))
    e = 4.0 ** (2 / problem.eta) * problem.a ** (2 / problem.eta) * t * t / problem.eta ** (2 / problem.eta)
    if w == 0:
        return 0.0
    return 2.0 * w * math.exp(e) if e < 709.0 else math.inf


def _omega_power_integral(problem, t, q):
    """int_0^t omega(s)^q ds by adaptive quadrature in the lag."""
    if t == 0:
        return 0.0
    f = lambda u: float(problem.omega_at(t - u)) ** q
    try:
        return singular_quad(f, t, 1e-10)
    except QuadratureError as exc:
        # a vanishing integrand has no attainable relative accuracy
        if exc.abserr <= 1e-300 + 1e-10 * abs(exc.estimate):
            return exc.estimate
        raise


def explicit_bound(problem: GronwallProblem, t: float) -> float:
    """2 omega(t) + (8 a t^(eta/2)/eta) exp(4^(2/eta) a^(2/eta) t^2/eta^(2/eta)) (int_0^t omega^(2/eta))^(eta/2).

    In the limit case eta = 1 with monotone omega the monotone bound is returned.
    """
    problem._check_t(t)
    a, eta = problem.a, problem.eta
    if problem.limit_case and problem.monotone:
        return monotone_bound(problem, t)
    w = float(problem.omega_at(t))
    if t == 0:
        return 2.0 * w
    integral = _omega_power_integral(problem, t, 2.0 / eta)
    if integral <= 0:
        return 2.0 * w
    e = 4.0 ** (2 / eta) * a ** (2 / eta) * t * t / eta ** (2 / eta)
    log_tail = math.log(8.0 * a / eta) + 0.5 * eta * math.log(t) + e + 0.5 * eta * math.log(integral)
    return 2.0 * w + (math.exp(log_tail) if log_tail < 709.0 else math.inf)


@dataclass(frozen=True)
class HenryBound:
    value: float
    truncation_error: float
    terms: int
    limit_case: bool


def _product_linear_moments(lag_lo, lag_hi, c):
    """Exact int u^(c-1) du and int u^c du over each lag cell."""
    m0 = (lag_hi**c - lag_lo**c) / c
    m1 = (lag_hi ** (c + 1) - lag_lo ** (c + 1)) / (c + 1)
    return m0, m1


def henry_series_bound(problem: GronwallProblem, t: float, tol: float = 1e-12) -> HenryBound:
    """omega(t) + int_0^t sum_n (a Gamma(eta))^n (t-s)^(n eta - 1)/Gamma(n eta) omega(s) ds.

    omega is sampled on ``problem.steps`` uniform cells of [0, t] and integrated
    as a piecewise-linear function against each power kernel exactly.  The
    series stops once a geometric bound on the remaining terms falls below
    ``tol`` times the running sum.
    """
    problem._check_t(t)
    if not t > 0:
        raise DomainError("henry series bound needs t > 0")
    if not 0 < tol < 1:
        raise DomainError("tol must lie in (0, 1)")
    a, eta, n = problem.a, problem.eta, problem.steps
    s = np.linspace(0.0, t, n + 1)
    w = problem.omega_at(s)
    wt = float(w[-1])
    sup = float(np.max(w))
    # cell j covers s in [s_j, s_{j+1}], i.e. lag u in [t - s_{j+1}, t - s_j]
    lo = np.maximum(t - s[1:], 0.0)
    hi = t - s[:-1]
    lo[-1] = 0.0
    # linear omega in u on each cell: omega = w_{j+1} + (w_j - w_{j+1}) (u - lo)/(hi - lo)
    slope = (w[:-1] - w[1:]) / (hi - lo)
    base = w[1:] - slope * lo
    log_ag = math.log(a * math.gamma(eta))
    total = 0.0
    if sup == 0:
        return HenryBound(wt, 0.0, 0, problem.limit_case)

    def log_term_bound(k):
        # (a Gamma(eta))^k int_0^t u^(k eta-1) sup|omega| du / Gamma(k eta)
        return k * log_ag + k * eta * math.log(t) - float(gammaln(k * eta + 1.0)) + math.log(sup)

    for k in range(1, TERM_CAP + 1):
        c = k * eta
        m0, m1 = _product_linear_moments(lo, hi, c)
        integral = float(np.sum(base * m0 + slope * m1))
        log_coef = k * log_ag - float(gammaln(c))
        if integral > 0 and log_coef + math.log(integral) > 700.0:
            raise SeriesError(f"henry series overflows at term {k}", math.inf)
        total += math.exp(log_coef) * integral
        nxt, nxt2 = log_term_bound(k + 1), log_term_bound(k + 2)
        q = math.exp(nxt2 - nxt)
        if q < 1.0 and nxt < 700.0:
            tail = math.exp(nxt) / (1.0 - q)
            if tail < tol * (wt + total):
                return HenryBound(wt + total, tail, k, problem.limit_case)
    raise SeriesError(f"henry series not converged within {TERM_CAP} terms", wt + total)


@dataclass(frozen=True)
class DominanceReport:
    max_ratio: float
    argmax_t: float
    ratios: np.ndarray
    bounds: np.ndarray
    dominated: bool
    limit_case: bool


def discrete_weights(problem: GronwallProblem) -> np.ndarray:
    """Plain eta-weights by lag on the problem grid: w_l = h^eta (l^eta - (l-1)^eta)/eta."""
    return plain_lag_weights(problem.eta, problem.horizon / problem.steps, problem.steps)


def saturate(problem: GronwallProblem) -> np.ndarray:
    """Solve the discrete inequality with equality at every node."""
    w = discrete_weights(problem)
    om = problem.omega_at(problem.nodes)
    v = np.empty_like(om)
    for k in range(om.shape[0]):
        v[k] = om[k] + problem.a * np.dot(w[:k][::-1], v[:k])
    return v


def check_inequality_dominance(
    problem: GronwallProblem, v_samples: np.ndarray, slack: float = 1e-12, tol: float = 1e-6
) -> DominanceReport:
    """Verify ``v_samples`` solves the discrete inequality, then compare it with the explicit bound."""
    v = np.asarray(v_samples, dtype=float)
    t = problem.nodes
    if v.shape != t.shape:
        raise DomainError(f"v_samples must have {t.shape[0]} entries")
    w = discrete_weights(problem)
    om = problem.omega_at(t)
    for k in range(t.shape[0]):
        rhs = om[k] + problem.a * np.dot(w[:k][::-1], v[:k])
        if v[k] > rhs + slack * max(1.0, abs(rhs)):
            raise ContractError(f"discrete inequality fails at node {k} (t={t[k]:.6g}): {v[k]!r} > {rhs!r}")
    bounds = np.array([explicit_bound(problem, float(tk)) for tk in t])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(v == 0, 0.0, v / bounds)
    i = int(np.argmax(ratios))
    return DominanceReport(
        float(ratios[i]), float(t[i]), ratios, bounds, bool(ratios[i] <= 1.0 + tol), problem.limit_case
    )


def _constant(c=1.0):
    return (lambda t: np.full(np.shape(t), float(c))), True


def _linear(slope=1.0, intercept=0.0):
    if slope < 0 or intercept < 0:
        raise DomainError("linear omega needs non-negative slope and intercept")
    return (lambda t: intercept + slope * np.asarray(t, dtype=float)), True


def _power(c=1.0, p=0.5):
    if c < 0 or p < 0:
        raise DomainError("power omega needs c >= 0 and p >= 0")
    return (lambda t: c * np.asarray(t, dtype=float) ** p), True


def _wave(c=1.0, amplitude=0.5, frequency=3.0):
    if not 0 <= amplitude <= 1:
        raise DomainError("wave amplitude must lie in [0, 1]")
    return (lambda t: c * (1.0 + amplitude * np.cos(frequency * np.asarray(t, dtype=float)))), False


OMEGA_PRESETS = {"constant": _constant, "linear": _linear, "power": _power, "wave": _wave}


def make_problem(a, eta, horizon, omega="constant", steps=256, **params) -> GronwallProblem:
    try:
        factory = OMEGA_PRESETS[omega]
    except KeyError:
        raise DomainError(f"unknown omega preset {omega!r}; choose from {sorted(OMEGA_PRESETS)}") from None
    fn, mono = factory(**params)
    return GronwallProblem(float(a), float(eta), float(horizon), fn, mono, int(steps))


def bound_table(problem: GronwallProblem, tol: float = 1e-12) -> dict:
    """The three bounds on the problem grid (t > 0 for the series)."""
    t = problem.nodes
    om = problem.omega_at(t)
    expl = np.array([explicit_bound(problem, float(x)) for x in t])
    mono = np.array([monotone_bound(problem, float(x)) for x in t]) if problem.monotone else np.full(t.shape, np.nan)
    henry = np.array([om[0]] + [henry_series_bound(problem, float(x), tol).value for x in t[1:]])
    table = {"t": t, "omega": om, "explicit": expl, "monotone": mono, "henry": henry}
    return table
