"""A model assembled from plain callables, mainly for tests and experiments."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .base import ModelSpec


@dataclass(frozen=True)
class CustomModel(ModelSpec):
    """Coefficients given as vectorised callables ``f(t, x)``; missing ones are zero.

    Spot is the first state coordinate and is observed directly.
    """

    z0: tuple = (0.0,)
    brownian: int = 1
    drift_fn: Callable | None = None
    diffusion_fn: Callable | None = None
    drift_jac_fn: Callable | None = None
    diffusion_jac_fn: Callable | None = None
    intensity: float = 0.0
    marks: object = None
    jump_fn: Callable | None = None
    jump_jac_fn: Callable | None = None
    allowed: frozenset = frozenset({"BEL_delta"})

    name = "custom"

    @property
    def dim(self):
        return len(self.z0)

    @property
    def brownian_dim(self):
        return self.brownian

    @property
    def families(self):
        return self.allowed

    @property
    def spot(self):
        return self.z0[0]

    def with_spot(self, spot):
        return replace(self, z0=(float(spot),) + tuple(self.z0[1:]))

    def initial_state(self, spot=None):
        z = np.array(self.z0, dtype=float)
        if spot is not None:
            z[0] = spot
        return z

    def spot_jacobian(self):
        e = np.zeros(self.dim)
        e[0] = 1.0
        return e

    def drift(self, t, x):
        return np.zeros_like(x) if self.drift_fn is None else self.drift_fn(t, x)

    def diffusion(self, t, x):
        if self.diffusion_fn is None:
            return np.zeros((x.shape[0], self.dim, self.brownian))
        return self.diffusion_fn(t, x)

    def drift_jac(self, t, x):
        if self.drift_jac_fn is None:
            return np.zeros((x.shape[0], self.dim, self.dim))
        return self.drift_jac_fn(t, x)

    def diffusion_jac(self, t, x):
        if self.diffusion_jac_fn is None:
            return np.zeros((x.shape[0], self.dim, self.brownian, self.dim))
        return self.diffusion_jac_fn(t, x)

    @property
    def jump_intensity(self):
        return self.intensity

    @property
    def mark_law(self):
        return self.marks

    def jump(self, t, x, y):
        return np.zeros_like(x) if self.jump_fn is None else self.jump_fn(t, x, y)

    def jump_jac(self, t, x, y):
        if self.jump_jac_fn is None:
            return np.zeros((x.shape[0], self.dim, self.dim))
        return self.jump_jac_fn(t, x, y)

    def observe(self, x, component="spot", t=None):
        return x[:, 0]

    def observe_jac(self, x, component="spot", t=None):
        J = np.zeros_like(x)
        J[:, 0] = 1.0
        return J
