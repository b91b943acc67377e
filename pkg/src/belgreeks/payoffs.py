"""Payoffs of the form ``f(s_1, ..., s_n) = phi(c . s)``.

A payoff observes one model component at ``n`` dates, projects the observed
vector on fixed coefficients ``c`` and applies a scalar profile ``phi``. This
covers the European call, double digital (``c = (1,)``) and the digital
cliquet on ``S_T - S_T1`` (``c = (-1, 1)``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

REGULARITIES = ("smooth_bounded", "lipschitz", "class_J")
_RANK = {r: i for i, r in enumerate(REGULARITIES)}


# --- scalar profiles ---------------------------------------------------------

class Profile:
    regularity = "smooth_bounded"
    discontinuities: tuple = ()

    def __call__(self, u):
        raise NotImplementedError

    def derivative(self, u):
        raise NotImplementedError(f"{type(self).__name__} has no derivative")

    def smooth_part(self, bandwidth, window) -> "Profile":
        """C^1 profile that equals this one outside the discontinuity windows."""
        if self.discontinuities:
            raise NotImplementedError
        return self

    @property
    def scale(self) -> float:
        return 1.0


@dataclass(frozen=True)
class CallProfile(Profile):
    strike: float

    regularity = "lipschitz"

    def __call__(self, u):
        return np.maximum(u - self.strike, 0.0)

    def derivative(self, u):
        return (u > self.strike).astype(float)


@dataclass(frozen=True)
class PutProfile(Profile):
    strike: float

    regularity = "lipschitz"

    def __call__(self, u):
        return np.maximum(self.strike - u, 0.0)

    def derivative(self, u):
        return -(u < self.strike).astype(float)


@dataclass(frozen=True)
class LinearProfile(Profile):
    slope: float = 1.0
    intercept: float = 0.0

    regularity = "lipschitz"

    def __call__(self, u):
        return self.intercept + self.slope * u

    def derivative(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.slope)


@dataclass(frozen=True)
class ConstantProfile(Profile):
    value: float = 1.0

    def __call__(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.value)

    def derivative(self, u):
        return np.zeros_like(np.asarray(u, dtype=float))


@dataclass(frozen=True)
class GaussianBumpProfile(Profile):
    """``exp(-(u - center)^2 / (2 width^2))``: smooth and bounded."""

    center: float
    width: float

    def __call__(self, u):
        return np.exp(-0.5 * ((u - self.center) / self.width) ** 2)

    def derivative(self, u):
        v = (u - self.center) / self.width
        return -v / self.width * np.exp(-0.5 * v * v)


@dataclass(frozen=True)
class HatProfile(Profile):
    """Compactly supported tent on ``[lo, hi]`` peaking at ``peak``."""

    lo: float
    peak: float
    hi: float

    regularity = "lipschitz"

    def __call__(self, u):
        up = (u - self.lo) / (self.peak - self.lo)
        down = (self.hi - u) / (self.hi - self.peak)
        return np.clip(np.minimum(up, down), 0.0, None)

    def derivative(self, u):
        return np.where((u > self.lo) & (u < self.peak), 1.0 / (self.peak - self.lo),
                        np.where((u > self.peak) & (u < self.hi), -1.0 / (self.hi - self.peak), 0.0))


def _ramp(u, at, half_width):
    """Cubic smoothstep from 0 to 1 across ``[at - half_width, at + half_width]`` (C^1)."""
    s = np.clip((u - at + half_width) / (2.0 * half_width), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _ramp_d1(u, at, half_width):
    s = np.clip((u - at + half_width) / (2.0 * half_width), 0.0, 1.0)
    return 6.0 * s * (1.0 - s) / (2.0 * half_width)


@dataclass(frozen=True)
class IndicatorProfile(Profile):
    """``1_[lo, hi](u)`` (closed interval)."""

    lo: float
    hi: float

    regularity = "class_J"

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def discontinuities(self):
        return (self.lo, self.hi)

    @property
    def scale(self):
        return self.hi - self.lo

    def __call__(self, u):
        return ((u >= self.lo) & (u <= self.hi)).astype(float)

    def smooth_part(self, bandwidth, window):
        half = bandwidth * window
        if self.lo + half >= self.hi - half:
            raise ValueError(f"localisation windows of half-width {half} around {self.lo} and {self.hi} "
                             f"overlap; reduce the bandwidth below {(self.hi - self.lo) / (2 * window)}")
        return SmoothedIndicatorProfile(self.lo, self.hi, half)


@dataclass(frozen=True)
class SmoothedIndicatorProfile(Profile):
    lo: float
    hi: float
    half_width: float

    def __call__(self, u):
        return _ramp(u, self.lo, self.half_width) - _ramp(u, self.hi, self.half_width)

    def derivative(self, u):
        return _ramp_d1(u, self.lo, self.half_width) - _ramp_d1(u, self.hi, self.half_width)


@dataclass(frozen=True)
class ResidualProfile(Profile):
    """``f - g``: bounded and supported inside the localisation windows."""

    full: Profile
    smooth: Profile

    regularity = "class_J"

    @property
    def discontinuities(self):
        return self.full.discontinuities

    def __call__(self, u):
        return self.full(u) - self.smooth(u)


@dataclass(frozen=True)
class SumProfile(Profile):
    """Finite linear combination ``sum a_i phi_i``."""

    terms: tuple  # of (coefficient, Profile)

    @property
    def regularity(self):
        return max((p.regularity for _, p in self.terms), key=_RANK.__getitem__)

    @property
    def discontinuities(self):
        return tuple(sorted({d for _, p in self.terms for d in p.discontinuities}))

    @property
    def scale(self):
        return min(p.scale for _, p in self.terms)

    def __call__(self, u):
        return sum(a * p(u) for a, p in self.terms)

    def derivative(self, u):
        return sum(a * p.derivative(u) for a, p in self.terms)

    def smooth_part(self, bandwidth, window):
        return SumProfile(tuple((a, p.smooth_part(bandwidth, window)) for a, p in self.terms))


# --- payoffs -----------------------------------------------------------------

@dataclass(frozen=True)
class Payoff:
    profile: Profile
    dates: tuple
    coefficients: tuple = (1.0,)
    component: str = "spot"
    name: str = "payoff"

    def __post_init__(self):
        if len(self.dates) != len(self.coefficients):
            raise ValueError("need one coefficient per observation date")
        if any(d <= 0 for d in self.dates) or list(self.dates) != sorted(self.dates):
            raise ValueError("observation dates must be positive and sorted")

    @property
    def arity(self) -> int:
        return len(self.dates)

    @property
    def regularity(self) -> str:
        return self.profile.regularity

    @property
    def discontinuities(self) -> tuple:
        return self.profile.discontinuities

    @property
    def horizon(self) -> float:
        return float(self.dates[-1])

    def project(self, values):
        return np.asarray(values, dtype=float) @ np.asarray(self.coefficients, dtype=float)

    def __call__(self, values):
        """Evaluate on observed values of shape (P, arity) (or (arity,))."""
        return self.profile(self.project(values))

    def gradient(self, values):
        u = self.project(values)
        return self.profile.derivative(u)[..., None] * np.asarray(self.coefficients, dtype=float)

    def observe(self, path):
        return np.stack([path.observation(t, self.component) for t in self.dates], axis=-1)

    def observe_spot_derivative(self, path):
        """d(observed values)/dS0 along each path, shape (P, arity)."""
        model = path.model
        zp = model.spot_jacobian()
        cols = []
        for t in self.dates:
            i = path.obs_times.index(float(t))
            J = model.observe_jac(path.obs_x[:, i], self.component, t)
            cols.append(np.einsum("pa,pab,b->p", J, path.obs_U[:, i], zp))
        return np.stack(cols, axis=-1)

    def with_profile(self, profile: Profile, name: str | None = None) -> "Payoff":
        return Payoff(profile, self.dates, self.coefficients, self.component, name or self.name)


@dataclass(frozen=True)
class LocalisationSplit:
    smooth: Payoff
    irregular: Payoff
    bandwidth: float
    window: float

    def __call__(self, values):
        return self.smooth(values) + self.irregular(values)


def localise(payoff: Payoff, bandwidth: float | None = None, window: float = 1.0) -> LocalisationSplit:
    """Split ``f = g + (f - g)`` with ``g`` C^1 and ``f - g`` supported near the jumps of ``f``."""
    if window <= 0:
        raise ValueError("window factor must be positive")
    h = 0.1 * payoff.profile.scale if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    if not payoff.discontinuities:
        zero = payoff.with_profile(ConstantProfile(0.0), payoff.name + ":residual")
        return LocalisationSplit(payoff, zero, h, window)
    g = payoff.profile.smooth_part(h, window)
    return LocalisationSplit(payoff.with_profile(g, payoff.name + ":smooth"),
                             payoff.with_profile(ResidualProfile(payoff.profile, g), payoff.name + ":residual"),
                             h, window)


def european_call(strike: float, maturity: float = 1.0) -> Payoff:
    return Payoff(CallProfile(float(strike)), (float(maturity),), name="european_call")


def european_put(strike: float, maturity: float = 1.0) -> Payoff:
    return Payoff(PutProfile(float(strike)), (float(maturity),), name="european_put")


def double_digital(k1: float, k2: float, maturity: float = 1.0) -> Payoff:
    if not k1 < k2:
        raise ValueError(f"double digital needs K1 < K2, got {k1} >= {k2}")
    return Payoff(IndicatorProfile(float(k1), float(k2)), (float(maturity),), name="double_digital")


def digital_cliquet(k1: float, k2: float, reset: float = 0.5, maturity: float = 1.0) -> Payoff:
    """``1_[k1, k2](S_T - S_T1)``."""
    if not k1 < k2:
        raise ValueError(f"cliquet needs K1* < K2*, got {k1} >= {k2}")
    if not 0 < reset < maturity:
        raise ValueError("reset date must lie strictly inside (0, maturity)")
    return Payoff(IndicatorProfile(float(k1), float(k2)), (float(reset), float(maturity)), (-1.0, 1.0),
                  name="digital_cliquet")


def asian_fixed_strike(strike: float, maturity: float = 1.0) -> Payoff:
    """Call on the running average ``A_T / T``."""
    return Payoff(CallProfile(float(strike)), (float(maturity),), component="average", name="asian_call")


def constant(value: float = 1.0, maturity: float = 1.0) -> Payoff:
    return Payoff(ConstantProfile(float(value)), (float(maturity),), name="constant")


def linear(slope: float = 1.0, intercept: float = 0.0, maturity: float = 1.0, component: str = "spot") -> Payoff:
    return Payoff(LinearProfile(float(slope), float(intercept)), (float(maturity),), component=component,
                  name="linear")


def gaussian_bump(center: float, width: float, maturity: float = 1.0) -> Payoff:
    return Payoff(GaussianBumpProfile(float(center), float(width)), (float(maturity),), name="gaussian_bump")


def linear_combination(terms, dates, coefficients=(1.0,), component="spot") -> Payoff:
    """``sum a_i phi_i`` over profiles sharing one observation map."""
    return Payoff(SumProfile(tuple((float(a), p) for a, p in terms)), tuple(dates), tuple(coefficients),
                  component, name="combination")


# --- legality ----------------------------------------------------------------

_NEEDS_SMOOTH = {"BEL_delta": "C^2_b payoffs (first-order elliptic weight)",
                 "BEL_gamma": "C^3_b payoffs (second-order elliptic weight)",
                 "hypoelliptic": "C^1_c payoffs (hypoelliptic weight)"}


class LegalityError(ValueError):
    pass


def check_legality(family: str, model, payoff: Payoff) -> None:
    """Reject (weight family, model, payoff regularity) combinations the theory does not cover."""
    if family not in model.families:
        raise LegalityError(f"weight family {family} is not available for model {model.name} "
                            f"(allowed: {sorted(model.families)})")
    if payoff.regularity == "class_J" and family in _NEEDS_SMOOTH and not model.admits_indicators:
        raise LegalityError(f"{family} requires {_NEEDS_SMOOTH[family]}; indicator payoff {payoff.name} "
                            f"is only admitted for the stochastic volatility jump models")
