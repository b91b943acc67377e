"""Degenerate (spot, running integral) systems used for Asian payoffs.

Both models carry the state ``(S, A)`` with ``dA = S_{t-} dt`` and only one
Brownian motion, so ``X X^T`` is singular and the hypoelliptic weight is the
only one available.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..stochastic_core import LogNormalReturnMarks, MarkLaw, PointMass
from .base import ModelSpec


class _AsianObservation:
    components = ("spot", "integral", "average")

    def observe(self, x, component="spot", t=None):
        if component == "spot":
            return x[:, 0]
        if component == "integral":
            return x[:, 1]
        if component == "average":
            return x[:, 1] / t
        raise KeyError(f"unknown component {component!r}")

    def observe_jac(self, x, component="spot", t=None):
        J = np.zeros((x.shape[0], 2))
        if component == "spot":
            J[:, 0] = 1.0
        elif component == "integral":
            J[:, 1] = 1.0
        elif component == "average":
            J[:, 1] = 1.0 / t
        else:
            raise KeyError(f"unknown component {component!r}")
        return J

    def initial_state(self, spot=None):
        return np.array([self.s0 if spot is None else float(spot), 0.0])

    @property
    def spot(self):
        return self.s0

    def with_spot(self, spot):
        return replace(self, s0=float(spot))

    def spot_jacobian(self):
        return np.array([1.0, 0.0])


def _check_relative_marks(law):
    if law is None or isinstance(law, LogNormalReturnMarks):
        return
    lowest = law.value if isinstance(law, PointMass) else law.lo
    if lowest <= -1.0:
        raise ValueError("relative jump marks must exceed -1")


@dataclass(frozen=True)
class BachelierJumpAsian(_AsianObservation, ModelSpec):
    """``dS = sigma dW + dN`` (unit jumps, not compensated), ``dA = S dt``."""

    sigma: float = 1.0
    jump_rate: float = 0.0
    s0: float = 0.0
    jump_size: float = 1.0

    name = "bachelier_asian"
    dim = 2
    brownian_dim = 1
    families = frozenset({"hypoelliptic"})

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.jump_rate < 0:
            raise ValueError("jump_rate must be non-negative")

    @property
    def jump_intensity(self):
        return self.jump_rate

    @property
    def mark_law(self):
        return PointMass(self.jump_size)

    def drift(self, t, x):
        out = np.zeros_like(x)
        out[:, 1] = x[:, 0]
        return out

    def diffusion(self, t, x):
        X = np.zeros((x.shape[0], 2, 1))
        X[:, 0, 0] = self.sigma
        return X

    def drift_jac(self, t, x):
        J = np.zeros((x.shape[0], 2, 2))
        J[:, 1, 0] = 1.0
        return J

    def diffusion_jac(self, t, x):
        return np.zeros((x.shape[0], 2, 1, 2))

    def jump(self, t, x, y):
        out = np.zeros_like(x)
        out[:, 0] = y
        return out


@dataclass(frozen=True)
class ExpLevyAsian(_AsianObservation, ModelSpec):
    """``dS = beta S dt + sigma S dW + int y S (mu - nu)``, ``dA = S dt``.

    The compensator ``intensity * E[y; retained marks] * S`` sits in the drift.
    Marks are relative jumps in ``(-1, inf)``, truncated to
    ``[-1 + trunc, 1/trunc]``.
    """

    beta: float = 0.0
    sigma: float = 0.2
    s0: float = 100.0
    intensity: float = 0.0
    marks: MarkLaw | None = None
    trunc: float = 1e-3

    name = "exp_levy_asian"
    dim = 2
    brownian_dim = 1
    families = frozenset({"hypoelliptic"})

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.s0 <= 0:
            raise ValueError("spot must be positive")
        if self.intensity < 0:
            raise ValueError("intensity must be non-negative")
        _check_relative_marks(self.marks)

    @property
    def jump_intensity(self):
        return self.intensity

    @property
    def mark_law(self):
        if self.marks is None or self.intensity == 0:
            return None
        if isinstance(self.marks, LogNormalReturnMarks):
            return self.marks.truncated(self.trunc)
        return self.marks

    @property
    def compensator(self):
        law = self.mark_law
        return 0.0 if law is None else self.intensity * law.restricted_mean()

    def drift(self, t, x):
        out = np.empty_like(x)
        out[:, 0] = (self.beta - self.compensator) * x[:, 0]
        out[:, 1] = x[:, 0]
        return out

    def diffusion(self, t, x):
        X = np.zeros((x.shape[0], 2, 1))
        X[:, 0, 0] = self.sigma * x[:, 0]
        return X

    def drift_jac(self, t, x):
        J = np.zeros((x.shape[0], 2, 2))
        J[:, 0, 0] = self.beta - self.compensator
        J[:, 1, 0] = 1.0
        return J

    def diffusion_jac(self, t, x):
        J = np.zeros((x.shape[0], 2, 1, 2))
        J[:, 0, 0, 0] = self.sigma
        return J

    def jump(self, t, x, y):
        out = np.zeros_like(x)
        out[:, 0] = y * x[:, 0]
        return out

    def jump_jac(self, t, x, y):
        J = np.zeros((x.shape[0], 2, 2))
        J[:, 0, 0] = y
        return J

    def h_derivative_accumulator(self):
        from ..weights import ExpLevyAsianAux

        return ExpLevyAsianAux(self.sigma, self.s0)


def make_bachelier_jump_asian(sigma: float, jump_rate: float, s0: float = 0.0) -> BachelierJumpAsian:
    return BachelierJumpAsian(sigma=sigma, jump_rate=jump_rate, s0=s0)


def make_exp_levy_asian(beta: float, sigma: float, mark_law: MarkLaw | None, trunc: float = 1e-3,
                        s0: float = 100.0, intensity: float = 1.0) -> ExpLevyAsian:
    _check_relative_marks(mark_law)
    if not 0.0 < trunc < 1.0:
        raise ValueError("truncation level must lie in (0, 1)")
    return ExpLevyAsian(beta=beta, sigma=sigma, s0=s0, intensity=intensity if mark_law is not None else 0.0,
                        marks=mark_law, trunc=trunc)
