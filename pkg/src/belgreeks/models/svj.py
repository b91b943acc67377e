"""Heston-type stochastic volatility with jumps, in (log S, sigma) coordinates.

The volatility equation carries a ``c / sigma`` drift and the diffusion a
factor ``sigma``; both are replaced by truncated versions that agree with
the raw expressions on a band ``[lo, N]`` and are C^2 and bounded outside it.
The Brownian order is ``(Z, W)``: ``Z`` drives only the stock, ``W`` is shared.

Two time steppers are available for the volatility coordinate. ``"euler"``
is the plain left-point Euler step of the truncated system. ``"implicit"``
(the default) treats the ``c / sigma - kappa sigma / 2`` drift implicitly,
which reduces to a quadratic with a positive root; the step is monotone in
``sigma`` and never overshoots below zero, where Euler paths spend time at
the floor and blow up the ``1 / p(sigma)`` weight integrands. When the root
falls below ``1/N`` (outside the band where the truncated drift equals
``c / sigma``) that row falls back to the Euler step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..stochastic_core import MarkLaw, NormalMarks
from .base import ModelSpec


# quintic smoothstep: S(0)=0, S(1)=1, first and second derivatives vanish at both ends
def _smooth(u):
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def _smooth_d1(u):
    u = np.clip(u, 0.0, 1.0)
    return 30.0 * u**2 * (1.0 - u) ** 2


def _smooth_d2(u):
    u = np.clip(u, 0.0, 1.0)
    return 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)


@dataclass(frozen=True)
class SvjParams:
    r: float = 0.0
    rho: float = -0.7
    kappa: float = 4.0
    theta: float = 0.08
    eta: float = 0.6
    sigma0_sq: float = 0.1
    intensity: float = 1.0
    jump_law: MarkLaw = field(default_factory=lambda: NormalMarks(-0.1, 0.1))
    gamma: float = 0.0
    s0: float = 100.0
    # "compensated": drift of log S carries -lambda E[y]; "martingale": -lambda (E[e^y] - 1)
    compensation: str = "compensated"

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError("correlation must satisfy |rho| < 1")
        if not 2 * self.kappa * self.theta > self.eta**2:
            raise ValueError(f"Feller condition 2*kappa*theta > eta^2 fails "
                             f"({2 * self.kappa * self.theta} <= {self.eta ** 2})")
        if self.sigma0_sq <= 0:
            raise ValueError("initial variance must be positive")
        if self.gamma < 0:
            raise ValueError("variance jump size gamma must be non-negative")
        if self.intensity < 0:
            raise ValueError("intensity must be non-negative")
        if self.compensation not in ("compensated", "martingale"):
            raise ValueError("compensation must be 'compensated' or 'martingale'")

    @property
    def delta(self):
        return 4 * self.kappa * self.theta / self.eta**2

    @property
    def xi(self):
        return 0.5 * (self.delta / 2 - 1)

    @property
    def sigma0(self):
        return float(np.sqrt(self.sigma0_sq))

    @property
    def vol_drift_constant(self):
        return self.kappa * self.theta / 2 - self.eta**2 / 8

    def jump_compensator(self):
        if self.intensity == 0:
            return 0.0
        if self.compensation == "compensated":
            return self.intensity * self.jump_law.restricted_mean()
        m, s = self.jump_law.mean, self.jump_law.sd
        return self.intensity * (np.exp(m + 0.5 * s * s) - 1.0)


@dataclass(frozen=True)
class TruncationLevel:
    """Truncation level ``N`` for the approximating system.

    ``floor`` is where the diffusion factor stops following ``sigma``; by default
    it is ``N**-xi``, but it can be set independently.
    """

    N: float = 1000
    floor: float | None = 1e-4

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("truncation level N must be >= 2")
        if self.floor is not None and not 0 < self.floor <= 1:
            raise ValueError("floor must lie in (0, 1]")

    def floor_value(self, params: SvjParams) -> float:
        if self.floor is not None:
            return float(self.floor)
        if params.xi <= 0:
            raise ValueError("xi must be positive")
        return float(self.N ** (-params.xi))


@dataclass(frozen=True)
class Truncations:
    """The three C^2 truncated coefficient functions and their derivatives."""

    N: float
    floor: float
    c: float

    def h(self, x):
        ax = np.abs(x)
        raw = 0.5 * x * x
        blend = raw * (1.0 - _smooth(ax - self.N))
        return np.where(ax <= self.N, raw, blend)

    def h_d1(self, x):
        ax, sg = np.abs(x), np.sign(x)
        u = ax - self.N
        blend = x * (1.0 - _smooth(u)) - 0.5 * x * x * _smooth_d1(u) * sg
        return np.where(ax <= self.N, x, blend)

    def h_d2(self, x):
        ax, sg = np.abs(x), np.sign(x)
        u = ax - self.N
        blend = (1.0 - _smooth(u)) - 2.0 * x * sg * _smooth_d1(u) - 0.5 * x * x * _smooth_d2(u)
        return np.where(ax <= self.N, 1.0, blend)

    def g(self, x):
        lo = 1.0 / self.N
        safe = np.where(x > 0, x, 1.0)
        raw = self.c / safe
        u = (x - 0.5 * lo) * 2.0 * self.N
        return np.where(x >= lo, raw, np.where(x > 0.5 * lo, raw * _smooth(u), 0.0))

    def g_d1(self, x):
        lo = 1.0 / self.N
        safe = np.where(x > 0, x, 1.0)
        u = (x - 0.5 * lo) * 2.0 * self.N
        raw = -self.c / safe**2
        blend = raw * _smooth(u) + self.c / safe * _smooth_d1(u) * 2.0 * self.N
        return np.where(x >= lo, raw, np.where(x > 0.5 * lo, blend, 0.0))

    def g_d2(self, x):
        lo = 1.0 / self.N
        safe = np.where(x > 0, x, 1.0)
        u = (x - 0.5 * lo) * 2.0 * self.N
        k = 2.0 * self.N
        raw = 2.0 * self.c / safe**3
        blend = (raw * _smooth(u) - 2.0 * self.c / safe**2 * _smooth_d1(u) * k
                 + self.c / safe * _smooth_d2(u) * k * k)
        return np.where(x >= lo, raw, np.where(x > 0.5 * lo, blend, 0.0))

    def p(self, x):
        f = self.floor
        blend = f + (x - f) * _smooth(x / f)
        return np.where(x >= f, x, np.where(x > 0, blend, f))

    def p_d1(self, x):
        f = self.floor
        u = x / f
        blend = _smooth(u) + (x - f) * _smooth_d1(u) / f
        return np.where(x >= f, 1.0, np.where(x > 0, blend, 0.0))

    def p_d2(self, x):
        f = self.floor
        u = x / f
        blend = 2.0 * _smooth_d1(u) / f + (x - f) * _smooth_d2(u) / f**2
        return np.where(x >= f, 0.0, np.where(x > 0, blend, 0.0))


@dataclass(frozen=True)
class SvjModel(ModelSpec):
    """SVJ (``params.gamma == 0``) or SVJJ in ``(log S, sigma)``.

    With ``trunc=None`` the raw coefficients are used (no positivity guard).
    """

    params: SvjParams
    trunc: TruncationLevel | None = TruncationLevel()
    double_jump: bool = False
    vol_scheme: str = "implicit"

    dim = 2
    brownian_dim = 2
    admits_indicators = True

    def __post_init__(self):
        if self.double_jump is False and self.params.gamma != 0:
            raise ValueError("variance jumps require the double-jump model")
        if self.vol_scheme not in ("euler", "implicit"):
            raise ValueError("vol_scheme must be 'euler' or 'implicit'")

    @property
    def name(self):
        return "svjj" if self.double_jump else "svj"

    @property
    def families(self):
        own = "SVJJ_delta" if self.double_jump else "SVJ_delta"
        return frozenset({"BEL_delta", "BEL_gamma", own, "SVJ_gamma"})

    @property
    def _tr(self):
        if self.trunc is None:
            return None
        return Truncations(self.trunc.N, self.trunc.floor_value(self.params), self.params.vol_drift_constant)

    @property
    def floor(self) -> float:
        return 0.0 if self.trunc is None else self.trunc.floor_value(self.params)

    def untruncated(self) -> "SvjModel":
        return replace(self, trunc=None)

    # --- initial condition --------------------------------------------------
    @property
    def spot(self):
        return self.params.s0

    def with_spot(self, spot):
        return replace(self, params=replace(self.params, s0=float(spot)))

    def initial_state(self, spot=None):
        s = self.params.s0 if spot is None else spot
        return np.array([np.log(s), self.params.sigma0])

    def spot_jacobian(self):
        return np.array([1.0 / self.params.s0, 0.0])

    def spot_hessian(self):
        return np.array([-1.0 / self.params.s0**2, 0.0])

    @property
    def epsilon(self):
        """Smallest eigenvalue of X X^T over the state space (diffusion factor >= floor/2)."""
        if self.trunc is None:
            return 0.0
        p = 0.5 * self.floor
        c = self.params.eta / 2
        rho2 = self.params.rho**2
        s = p * p + c * c
        return float(0.5 * (s - np.sqrt(s * s - 4 * (1 - rho2) * p * p * c * c)))

    # --- coefficient pieces -------------------------------------------------
    def _h(self, s):
        tr = self._tr
        return 0.5 * s * s if tr is None else tr.h(s)

    def _pieces(self, s, order):
        """Values and derivatives of (h, g, p) at sigma = s up to ``order``."""
        tr = self._tr
        c = self.params.vol_drift_constant
        if tr is None:
            vals = [(0.5 * s * s, c / s, s), (s, -c / s**2, np.ones_like(s)),
                    (np.ones_like(s), 2 * c / s**3, np.zeros_like(s))]
        else:
            vals = [(tr.h(s), tr.g(s), tr.p(s))]
            if order >= 1:
                vals.append((tr.h_d1(s), tr.g_d1(s), tr.p_d1(s)))
            if order >= 2:
                vals.append((tr.h_d2(s), tr.g_d2(s), tr.p_d2(s)))
        return vals[: order + 1]

    def drift(self, t, x):
        s = x[:, 1]
        h, g, _ = self._pieces(s, 0)[0]
        out = np.empty_like(x)
        out[:, 0] = self.params.r - self.params.jump_compensator() - h
        out[:, 1] = g - 0.5 * self.params.kappa * s
        return out

    def diffusion(self, t, x):
        p = self.diffusion_factor(x[:, 1])
        rho = self.params.rho
        X = np.zeros((x.shape[0], 2, 2))
        X[:, 0, 0] = np.sqrt(1 - rho * rho) * p
        X[:, 0, 1] = rho * p
        X[:, 1, 1] = 0.5 * self.params.eta
        return X

    def diffusion_factor(self, s):
        tr = self._tr
        return s if tr is None else tr.p(s)

    def drift_jac(self, t, x):
        d1 = self._pieces(x[:, 1], 1)[1]
        J = np.zeros((x.shape[0], 2, 2))
        J[:, 0, 1] = -d1[0]
        J[:, 1, 1] = d1[1] - 0.5 * self.params.kappa
        return J

    def diffusion_jac(self, t, x):
        dp = self._pieces(x[:, 1], 1)[1][2]
        rho = self.params.rho
        J = np.zeros((x.shape[0], 2, 2, 2))
        J[:, 0, 0, 1] = np.sqrt(1 - rho * rho) * dp
        J[:, 0, 1, 1] = rho * dp
        return J

    def drift_hess(self, t, x):
        d2 = self._pieces(x[:, 1], 2)[2]
        H = np.zeros((x.shape[0], 2, 2, 2))
        H[:, 0, 1, 1] = -d2[0]
        H[:, 1, 1, 1] = d2[1]
        return H

    def diffusion_hess(self, t, x):
        d2p = self._pieces(x[:, 1], 2)[2][2]
        rho = self.params.rho
        H = np.zeros((x.shape[0], 2, 2, 2, 2))
        H[:, 0, 0, 1, 1] = np.sqrt(1 - rho * rho) * d2p
        H[:, 0, 1, 1, 1] = rho * d2p
        return H

    def step_map(self, ctx, order):
        if self.vol_scheme == "euler":
            return None
        x, dt, dW = ctx.x, ctx.dt, ctx.dW
        prm = self.params
        s = x[:, 1]
        pieces = self._pieces(s, max(order, 0))
        h, g, p = pieces[0]
        shock = np.sqrt(1 - prm.rho**2) * dW[:, 0] + prm.rho * dW[:, 1]
        xn = np.empty_like(x)
        xn[:, 0] = x[:, 0] + (prm.r - prm.jump_compensator() - h) * dt + p * shock
        # a s' - c dt / s' = b with a = 1 + kappa dt / 2
        c = prm.vol_drift_constant
        a = 1.0 + 0.5 * prm.kappa * dt
        b = s + 0.5 * prm.eta * dW[:, 1]
        root = (b + np.sqrt(b * b + 4.0 * a * c * dt)) / (2.0 * a)
        lo = 0.0 if self.trunc is None else 1.0 / self.trunc.N
        ok = root >= lo
        explicit = s + (g - 0.5 * prm.kappa * s) * dt + 0.5 * prm.eta * dW[:, 1]
        xn[:, 1] = np.where(ok, root, explicit)
        if order == 0:
            return xn, None, None
        dh, dg, dp = pieces[1]
        safe = np.where(ok, root, 1.0)
        slope = np.where(ok, 1.0 / (a + c * dt / safe**2), 1.0 + (dg - 0.5 * prm.kappa) * dt)
        DG = np.zeros((x.shape[0], 2, 2))
        DG[:, 0, 0] = 1.0
        DG[:, 0, 1] = -dh * dt + dp * shock
        DG[:, 1, 1] = slope
        if order < 2:
            return xn, DG, None
        d2h, d2g, d2p = pieces[2]
        D2G = np.zeros((x.shape[0], 2, 2, 2))
        D2G[:, 0, 1, 1] = -d2h * dt + d2p * shock
        D2G[:, 1, 1, 1] = np.where(ok, 2.0 * c * dt * slope**3 / safe**3, d2g * dt)
        return xn, DG, D2G

    # --- jumps --------------------------------------------------------------
    @property
    def jump_intensity(self):
        return self.params.intensity

    @property
    def mark_law(self):
        return self.params.jump_law

    def jump(self, t, x, y):
        out = np.zeros_like(x)
        out[:, 0] = y
        if self.double_jump:
            s = x[:, 1]
            out[:, 1] = np.sqrt(s * s + self.params.gamma) - s
        return out

    def jump_jac(self, t, x, y):
        J = np.zeros((x.shape[0], 2, 2))
        if self.double_jump:
            s = x[:, 1]
            J[:, 1, 1] = s / np.sqrt(s * s + self.params.gamma) - 1.0
        return J

    def jump_hess(self, t, x, y):
        H = np.zeros((x.shape[0], 2, 2, 2))
        if self.double_jump:
            s = x[:, 1]
            H[:, 1, 1, 1] = self.params.gamma / (s * s + self.params.gamma) ** 1.5
        return H

    # --- observation --------------------------------------------------------
    def observe(self, x, component="spot", t=None):
        if component == "spot":
            return np.exp(x[:, 0])
        if component == "vol":
            return x[:, 1]
        raise KeyError(f"unknown component {component!r}")

    def observe_jac(self, x, component="spot", t=None):
        J = np.zeros((x.shape[0], 2))
        if component == "spot":
            J[:, 0] = np.exp(x[:, 0])
        elif component == "vol":
            J[:, 1] = 1.0
        else:
            raise KeyError(f"unknown component {component!r}")
        return J


def make_svj(params: SvjParams, trunc: TruncationLevel | None = TruncationLevel(),
             vol_scheme: str = "implicit") -> SvjModel:
    if params.gamma != 0:
        params = replace(params, gamma=0.0)
    return SvjModel(params=params, trunc=trunc, double_jump=False, vol_scheme=vol_scheme)


def make_svjj(params: SvjParams, trunc: TruncationLevel | None = TruncationLevel(),
              vol_scheme: str = "implicit") -> SvjModel:
    return SvjModel(params=params, trunc=trunc, double_jump=True, vol_scheme=vol_scheme)
