"""Experiment configuration documents (JSON) and their validation."""

from __future__ import annotations

import hashlib
import json
import math
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .models import PRESETS
from .observables import G_PRESETS

Kind = Literal["solve", "strong", "variation", "weak", "weak-derivative", "malliavin", "gronwall", "selfcheck"]


def _order(v: float, name: str) -> float:
    if not (math.isfinite(v) and 0.5 < v <= 1.0):
        raise ValueError(f"{name}={v!r} must lie in (1/2, 1]")
    return v


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelSpec(_Strict):
    name: Literal["deterministic-drift", "additive-noise", "linear", "holder-kink"] = "linear"
    params: dict[str, float] = Field(default_factory=dict)


class SchemeSpec(_Strict):
    drift_rule: Literal["integrated_weights"] = "integrated_weights"
    diffusion_rule: Literal["left_point_kernel", "integrated_l2_weights"] = "left_point_kernel"


class GridSpec(_Strict):
    T: float = Field(1.0, gt=0, allow_inf_nan=False)
    n: int = Field(512, ge=1)


class MCSpec(_Strict):
    m: int = Field(10_000, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)


class GSpec(_Strict):
    name: Literal["indicator", "sigmoid", "identity", "constant"] = "sigmoid"
    params: dict[str, float] = Field(default_factory=dict)


class GronwallSpec(_Strict):
    a: float = Field(1.0, gt=0, allow_inf_nan=False)
    eta: float = Field(0.8, gt=0, le=1)
    omega: Literal["constant", "linear", "power", "wave"] = "constant"
    params: dict[str, float] = Field(default_factory=dict)
    steps: int = Field(64, ge=1)


class ExperimentConfig(_Strict):
    kind: Kind
    model: ModelSpec = Field(default_factory=ModelSpec)
    scheme: SchemeSpec = Field(default_factory=SchemeSpec)
    grid: GridSpec = Field(default_factory=GridSpec)
    mc: MCSpec = Field(default_factory=MCSpec)
    alpha: Optional[float] = None
    beta: Optional[float] = None
    deltas: Optional[list[float]] = None
    side: Literal[-1, 1] = -1
    p: float = Field(2.0, ge=2, allow_inf_nan=False)
    t: Optional[float] = None
    sup: bool = False
    times: Optional[list[float]] = None
    gamma: Optional[float] = None
    g: GSpec = Field(default_factory=GSpec)
    variation: bool = False
    replica: int = Field(0, ge=0)
    tol: float = Field(1e-6, gt=0)
    gronwall: GronwallSpec = Field(default_factory=GronwallSpec)

    @field_validator("alpha")
    @classmethod
    def _alpha(cls, v):
        return None if v is None else _order(v, "alpha")

    @field_validator("beta")
    @classmethod
    def _beta(cls, v):
        return None if v is None else _order(v, "beta")

    @field_validator("deltas")
    @classmethod
    def _deltas(cls, v):
        if v is not None and any(not (math.isfinite(d) and d > 0) for d in v):
            raise ValueError("deltas must be positive")
        return v

    @field_validator("gamma")
    @classmethod
    def _gamma(cls, v):
        if v is not None and not (math.isfinite(v) and v > 0):
            raise ValueError(f"gamma={v!r} must be positive")
        return v

    @model_validator(mode="after")
    def _kind_fields(self):
        k = self.kind
        if k in ("strong", "variation", "weak", "weak-derivative"):
            if self.beta is None:
                raise ValueError(f"kind={k!r} requires beta")
            if not self.deltas:
                raise ValueError(f"kind={k!r} requires a non-empty deltas list")
            signs = (-1, 1) if k == "weak-derivative" else (self.side,)
            for d in self.deltas:
                for s in signs:
                    _order(self.beta + s * d, "beta + side*delta" if k != "weak-derivative" else "beta +/- delta")
        if k in ("solve", "malliavin") and self.alpha is None:
            raise ValueError(f"kind={k!r} requires alpha")
        if self.replica >= self.mc.m:
            raise ValueError(f"replica={self.replica} must be < mc.m={self.mc.m}")
        for name, tv in [("t", self.t)] + [("times", x) for x in (self.times or [])]:
            if tv is not None:
                kk = round(tv / (self.grid.T / self.grid.n))
                if not (0 <= tv <= self.grid.T) or abs(kk * self.grid.T / self.grid.n - tv) > 1e-9 * max(1.0, tv):
                    raise ValueError(f"{name}={tv!r} must be a node of the grid (T={self.grid.T}, n={self.grid.n})")
        if self.model.name not in PRESETS or self.g.name not in G_PRESETS:
            raise ValueError("unknown preset")
        return self

    @property
    def eval_time(self) -> float:
        return self.grid.T if self.t is None else self.t

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.model_validate_json(fh.read())
