"""Test functions g for weak-error experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DomainError


@dataclass(frozen=True)
class Indicator:
    """1{x <= K}."""

    K: float = 0.0
    continuous = False
    sup_norm = 1.0

    def __call__(self, x):
        return (np.asarray(x) <= self.K).astype(float)


@dataclass(frozen=True)
class Sigmoid:
    """1 / (1 + exp(-(x - center) / scale))."""

    center: float = 0.0
    scale: float = 1.0
    continuous = True
    sup_norm = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError("sigmoid scale must be positive")

    def __call__(self, x):
        return expit((np.asarray(x, dtype=float) - self.center) / self.scale)

    def derivative(self, x):
        s = self(x)
        return s * (1.0 - s) / self.scale


@dataclass(frozen=True)
class Identity:
    continuous = True
    sup_norm = math.inf

    def __call__(self, x):
        return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class Constant:
    c: float = 1.0
    continuous = True

    @property
    def sup_norm(self):
        return abs(self.c)

    def __call__(self, x):
        return np.full(np.shape(x), float(self.c))


G_PRESETS = {
    "indicator": Indicator,
    "sigmoid": Sigmoid,
    "identity": Identity,
    "constant": Constant,
}


def g_preset(name: str, **params):
    try:
        cls = G_PRESETS[name]
    except KeyError:
        raise DomainError(f"unknown test-function preset {name!r}; choose from {sorted(G_PRESETS)}") from None
    return cls(**params)
