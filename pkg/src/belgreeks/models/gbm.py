"""Geometric Brownian motion and the Merton jump-diffusion (validation models)."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..stochastic_core import NormalMarks
from .base import ModelSpec


def _col(v):
    return np.asarray(v, dtype=float).reshape(-1, 1)


@dataclass(frozen=True)
class GBM(ModelSpec):
    """``dS = r S dt + sigma S dW``, integrated in spot or log coordinates."""

    s0: float = 100.0
    sigma: float = 0.2
    r: float = 0.0
    coordinates: str = "spot"

    name = "gbm"
    families = frozenset({"BEL_delta", "BEL_gamma"})

    def __post_init__(self):
        if self.sigma <= 0 or self.s0 <= 0:
            raise ValueError("GBM needs positive sigma and spot")
        if self.coordinates not in ("spot", "log"):
            raise ValueError("coordinates must be 'spot' or 'log'")

    @property
    def log(self):
        return self.coordinates == "log"

    @property
    def spot(self):
        return self.s0

    def with_spot(self, spot):
        return replace(self, s0=float(spot))

    def initial_state(self, spot=None):
        s = self.s0 if spot is None else spot
        return np.array([np.log(s) if self.log else s], dtype=float)

    def spot_jacobian(self):
        return np.array([1.0 / self.s0 if self.log else 1.0])

    def spot_hessian(self):
        return np.array([-1.0 / self.s0**2 if self.log else 0.0])

    @property
    def epsilon(self):
        # Only elliptic in log coordinates; in spot coordinates X X^T = sigma^2 x^2.
        return self.sigma**2 if self.log else 0.0

    def drift(self, t, x):
        if self.log:
            return np.full_like(x, self.r - 0.5 * self.sigma**2)
        return self.r * x

    def diffusion(self, t, x):
        return (self.sigma * x if not self.log else np.full_like(x, self.sigma))[:, :, None]

    def drift_jac(self, t, x):
        return np.full(x.shape + (1,), 0.0 if self.log else self.r)

    def diffusion_jac(self, t, x):
        return np.full((x.shape[0], 1, 1, 1), 0.0 if self.log else self.sigma)

    def observe(self, x, component="spot", t=None):
        return np.exp(x[:, 0]) if self.log else x[:, 0]

    def observe_jac(self, x, component="spot", t=None):
        return _col(np.exp(x[:, 0]) if self.log else np.ones(x.shape[0]))


@dataclass(frozen=True)
class Merton(ModelSpec):
    """Black-Scholes with compound Poisson log-normal jumps.

    The mark ``y`` is the jump of ``log S``; the drift carries the
    compensator ``-lambda k`` with ``k = E[e^y] - 1``.
    """

    s0: float = 100.0
    sigma: float = 0.2
    r: float = 0.0
    intensity: float = 1.0
    jump_mean: float = -0.1
    jump_sd: float = 0.1
    coordinates: str = "spot"

    name = "merton"
    families = frozenset({"BEL_delta", "BEL_gamma"})

    def __post_init__(self):
        if self.sigma <= 0 or self.s0 <= 0:
            raise ValueError("Merton needs positive sigma and spot")
        if self.intensity < 0:
            raise ValueError("intensity must be non-negative")
        if self.coordinates not in ("spot", "log"):
            raise ValueError("coordinates must be 'spot' or 'log'")

    @property
    def log(self):
        return self.coordinates == "log"

    @property
    def k(self):
        return np.exp(self.jump_mean + 0.5 * self.jump_sd**2) - 1.0

    @property
    def spot(self):
        return self.s0

    def with_spot(self, spot):
        return replace(self, s0=float(spot))

    @property
    def jump_intensity(self):
        return self.intensity

    @property
    def mark_law(self):
        return NormalMarks(self.jump_mean, self.jump_sd)

    def initial_state(self, spot=None):
        s = self.s0 if spot is None else spot
        return np.array([np.log(s) if self.log else s], dtype=float)

    def spot_jacobian(self):
        return np.array([1.0 / self.s0 if self.log else 1.0])

    def spot_hessian(self):
        return np.array([-1.0 / self.s0**2 if self.log else 0.0])

    @property
    def epsilon(self):
        return self.sigma**2 if self.log else 0.0

    def drift(self, t, x):
        mu = self.r - self.intensity * self.k
        if self.log:
            return np.full_like(x, mu - 0.5 * self.sigma**2)
        return mu * x

    def diffusion(self, t, x):
        return (self.sigma * x if not self.log else np.full_like(x, self.sigma))[:, :, None]

    def drift_jac(self, t, x):
        return np.full(x.shape + (1,), 0.0 if self.log else self.r - self.intensity * self.k)

    def diffusion_jac(self, t, x):
        return np.full((x.shape[0], 1, 1, 1), 0.0 if self.log else self.sigma)

    def jump(self, t, x, y):
        if self.log:
            return np.broadcast_to(_col(y), x.shape).copy()
        return x * np.expm1(_col(y))

    def jump_jac(self, t, x, y):
        if self.log:
            return np.zeros(x.shape + (1,))
        return np.expm1(_col(y))[:, :, None]

    def observe(self, x, component="spot", t=None):
        return np.exp(x[:, 0]) if self.log else x[:, 0]

    def observe_jac(self, x, component="spot", t=None):
        return _col(np.exp(x[:, 0]) if self.log else np.ones(x.shape[0]))
