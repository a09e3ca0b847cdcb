"""Coefficient models: drift/diffusion oracles with their x-partials.

All oracles take ``(t, x)`` with scalar ``t`` and array ``x`` and return an
array shaped like ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractError, DomainError

Oracle = Callable[[float, np.ndarray], np.ndarray]


def _const(c: float) -> Oracle:
    return lambda t, x: np.full(np.shape(x), float(c))


@dataclass(frozen=True)
class CoefficientModel:
    b: Oracle
    sigma: Oracle
    db: Oracle
    dsigma: Oracle
    d2b: Optional[Oracle] = None
    d2sigma: Optional[Oracle] = None
    x0: float = 0.0
    lipschitz: float = 1.0
    holder_delta: float = 1.0
    holder_nu: float = 0.0
    sigma0: float = 0.0
    additive: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def has_second_derivatives(self) -> bool:
        return self.d2b is not None and self.d2sigma is not None

    def check_assumptions(self, horizon: float = 1.0, samples: int = 2000, seed: int = 0) -> None:
        """Spot-check Lipschitz, linear growth and (if declared) ellipticity."""
        rng = np.random.default_rng(seed)
        L = self.lipschitz
        ts = rng.uniform(0.0, horizon, samples)
        x = rng.normal(0.0, 5.0, samples)
        y = rng.normal(0.0, 5.0, samples)
        for t, xi, yi in zip(ts[:200], x[:200], y[:200]):
            xa, ya = np.array([xi]), np.array([yi])
            dx = abs(xi - yi)
            lip = abs(self.b(t, xa) - self.b(t, ya))[0] + abs(self.sigma(t, xa) - self.sigma(t, ya))[0]
            if lip > L * dx * (1 + 1e-9) + 1e-12:
                raise ContractError(f"{self.name}: Lipschitz bound L={L} violated near x={xi:.3g}")
            grow = abs(self.b(t, xa))[0] + abs(self.sigma(t, xa))[0]
            if grow > L * (1 + abs(xi)) * (1 + 1e-9):
                raise ContractError(f"{self.name}: linear growth bound violated near x={xi:.3g}")
            if self.sigma0 > 0 and abs(self.sigma(t, xa))[0] < self.sigma0 * (1 - 1e-12):
                raise ContractError(f"{self.name}: |sigma| < sigma0={self.sigma0} near x={xi:.3g}")


def deterministic_drift(c: float = 1.0, x0: float = 0.0) -> CoefficientModel:
    """b = c, sigma = 0; the solution is x0 + c t^alpha / Gamma(alpha + 1)."""
    zero = _const(0.0)
    return CoefficientModel(
        b=_const(c), sigma=zero, db=zero, dsigma=zero, d2b=zero, d2sigma=zero,
        x0=x0, lipschitz=max(abs(c), 1e-300), additive=True,
        name="deterministic-drift", params={"c": c, "x0": x0},
    )


def additive_noise(sigma0: float = 1.0, drift: float = 0.0, x0: float = 0.0) -> CoefficientModel:
    """b = drift, sigma = sigma0 (constants); X is Gaussian."""
    zero = _const(0.0)
    return CoefficientModel(
        b=_const(drift), sigma=_const(sigma0), db=zero, dsigma=zero, d2b=zero, d2sigma=zero,
        x0=x0, lipschitz=max(abs(drift) + abs(sigma0), 1e-300), sigma0=abs(sigma0), additive=True,
        name="additive-noise", params={"sigma0": sigma0, "drift": drift, "x0": x0},
    )


def linear(lam: float = 1.0, mu: float = 0.0, s0: float = 1.0, s1: float = 0.0, x0: float = 1.0) -> CoefficientModel:
    """b = mu - lam x, sigma = s0 + s1 x."""
    zero = _const(0.0)
    return CoefficientModel(
        b=lambda t, x: mu - lam * np.asarray(x, dtype=float),
        sigma=lambda t, x: s0 + s1 * np.asarray(x, dtype=float),
        db=_const(-lam), dsigma=_const(s1), d2b=zero, d2sigma=zero,
        x0=x0, lipschitz=max(abs(lam) + abs(s1), abs(mu) + abs(s0), 1e-300),
        sigma0=abs(s0) if s1 == 0 else 0.0, additive=(s1 == 0),
        name="linear", params={"lam": lam, "mu": mu, "s0": s0, "s1": s1, "x0": x0},
    )


def holder_kink(L: float = 1.0, delta: float = 0.5, sigma0: float = 1.0, x0: float = 0.0) -> CoefficientModel:
    """Drift whose x-derivative ``-L min(|x|, 1)^delta`` is only delta-Hoelder at 0."""
    if not 0 < delta <= 1:
        raise DomainError(f"delta={delta!r} must lie in (0, 1]")
    inv = 1.0 / (1.0 + delta)

    def b(t, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        inner = ax ** (1.0 + delta) * inv
        outer = inv + ax - 1.0
        return -L * np.sign(x) * np.where(ax <= 1.0, inner, outer)

    def db(t, x):
        return -L * np.minimum(np.abs(np.asarray(x, dtype=float)), 1.0) ** delta

    zero = _const(0.0)
    return CoefficientModel(
        b=b, sigma=_const(sigma0), db=db, dsigma=zero, d2b=None, d2sigma=zero,
        x0=x0, lipschitz=L + abs(sigma0), holder_delta=delta, holder_nu=0.0,
        sigma0=abs(sigma0), additive=True,
        name="holder-kink", params={"L": L, "delta": delta, "sigma0": sigma0, "x0": x0},
    )


PRESETS: dict[str, Callable[..., CoefficientModel]] = {
    "deterministic-drift": deterministic_drift,
    "additive-noise": additive_noise,
    "linear": linear,
    "holder-kink": holder_kink,
}


def preset(name: str, **params) -> CoefficientModel:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise DomainError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(**params)


# -- closed forms used by tests and CLI summaries ----------------------------


def gaussian_law(alpha: float, t: float, sigma0: float = 1.0, drift: float = 0.0, x0: float = 0.0) -> tuple[float, float]:
    """Mean and standard deviation of the additive-noise solution at time t."""
    mean = x0 + drift * t**alpha / math.gamma(alpha + 1.0)
    var = sigma0**2 * t ** (2 * alpha - 1) / ((2 * alpha - 1) * math.gamma(alpha) ** 2)
    return mean, math.sqrt(var)
