"""Malliavin weights: per-path random variables ``pi`` with ``dE[f]/dz = E[f pi]``.

Each weight is computed from integrals accumulated during path simulation.
A weight object knows which accumulators it needs (``accumulators``), how
much variation it needs (``order``) and how to turn the finished integrals
into the per-path value (``evaluate``). If a path was simulated without the
required integrals, ``evaluate`` re-runs the simulation on the same noise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .models.base import ModelSpec
from .models.simulate import Accumulator, SimulatedPath, simulate_path
from .stochastic_core import TimeGrid

DET_TOLERANCE = 1e-12
MAX_REJECTED_FRACTION = 1e-4


# --- tempering ---------------------------------------------------------------

@dataclass(frozen=True)
class Tempering:
    """Piecewise-constant deterministic function on ``[0, T]``.

    ``levels[i]`` applies on ``[breaks[i], breaks[i+1])``; the function is zero
    after the last break. Breaks should be grid nodes for exact integrals.
    """

    breaks: tuple
    levels: tuple

    def __post_init__(self):
        if len(self.breaks) != len(self.levels) + 1:
            raise ValueError("need one more break than levels")
        if self.breaks[0] != 0.0 or any(b >= c for b, c in zip(self.breaks, self.breaks[1:])):
            raise ValueError("breaks must start at 0 and increase")

    @classmethod
    def minimal(cls, until: float) -> "Tempering":
        """``1/until`` on ``[0, until]`` and zero afterwards."""
        return cls((0.0, float(until)), (1.0 / until,))

    @classmethod
    def constant(cls, horizon: float) -> "Tempering":
        return cls.minimal(horizon)

    @classmethod
    def piecewise(cls, breaks, levels) -> "Tempering":
        return cls(tuple(float(b) for b in breaks), tuple(float(v) for v in levels))

    @property
    def label(self) -> str:
        return ",".join(f"{b!r}" for b in self.breaks) + ":" + ",".join(f"{v!r}" for v in self.levels)

    @property
    def nodes(self) -> tuple:
        return tuple(b for b in self.breaks if b > 0)

    def values(self, grid: TimeGrid) -> np.ndarray:
        mid = 0.5 * (grid.nodes[:-1] + grid.nodes[1:])
        pos = np.searchsorted(np.asarray(self.breaks), mid, side="right") - 1
        lv = np.append(np.asarray(self.levels, dtype=float), 0.0)
        pos = np.where(pos >= len(self.levels), len(self.levels), pos)
        return lv[pos]

    def integral(self, grid: TimeGrid, upto: float) -> float:
        k = grid.index_of(upto)
        return float(np.sum(self.values(grid)[:k] * grid.dt[:k]))


@dataclass(frozen=True)
class MalliavinWeight:
    value: np.ndarray
    family: str
    target: tuple
    rejected: np.ndarray | None = None

    def __post_init__(self):
        ok = np.isfinite(self.value) if self.rejected is None else np.isfinite(self.value) | self.rejected
        if not np.all(ok):
            raise FloatingPointError(f"{self.family} weight is not finite on some paths")

    @property
    def rejected_count(self) -> int:
        return 0 if self.rejected is None else int(self.rejected.sum())


# --- accumulators ------------------------------------------------------------

class BelDeltaAccumulator(Accumulator):
    """``int a(t) (R U e_k)^T dW`` for every coordinate k, shape (P, d)."""

    needs_order = 1

    def __init__(self, tempering: Tempering):
        self.tempering = tempering
        self.key = "bel_delta/" + tempering.label

    def init(self, n_paths, model, grid, z):
        self._a = self.tempering.values(grid)
        return (np.zeros((n_paths, model.dim)),)

    def step(self, state, ctx):
        a = self._a[ctx.interval]
        if a == 0.0:
            return state
        RU = ctx.R @ ctx.U
        return (state[0] + a * np.einsum("pmd,pm->pd", RU, ctx.dW),)

    def finish(self, state):
        return state[0]


class BelGammaAccumulator(Accumulator):
    """Integrals of the second-order weight over ``[0, H/2]`` and ``[H/2, H]``."""

    needs_order = 2

    def __init__(self, horizon: float):
        self.horizon = float(horizon)
        self.key = f"bel_gamma/{self.horizon!r}"

    def init(self, n_paths, model, grid, z):
        grid.index_of(0.5 * self.horizon)
        mid = grid.nodes[:-1]
        self._half = np.where(mid < 0.5 * self.horizon, 1, np.where(mid < self.horizon, 2, 0))
        d = model.dim
        return (np.zeros((n_paths, d)), np.zeros((n_paths, d)),
                np.zeros((n_paths, d, d)), np.zeros((n_paths, d, d)))

    def step(self, state, ctx):
        I1, I2, IdR, Id2 = state
        half = self._half[ctx.interval]
        if half == 0:
            return state
        RU = ctx.R @ ctx.U
        inc = np.einsum("pmd,pm->pd", RU, ctx.dW)
        if half == 2:
            return I1, I2 + inc, IdR, Id2
        dW = ctx.dW
        IdR = IdR + np.einsum("pabc,pbk,pcj,pa->pjk", ctx.dR, ctx.U, ctx.U, dW)
        Id2 = Id2 + np.einsum("pab,pbjk,pa->pjk", ctx.R, ctx.U2, dW)
        return I1 + inc, I2, IdR, Id2

    def finish(self, state):
        I1, I2, IdR, Id2 = state
        return {"first_half": I1, "second_half": I2, "grad_R": IdR, "second_variation": Id2}


class SvjDeltaAccumulator(Accumulator):
    """``int_0^until dZ / (sqrt(1 - rho^2) p(sigma_-))`` on the simulated system."""

    def __init__(self, until: float):
        self.until = float(until)
        self.key = f"svj_delta/{self.until!r}"

    def init(self, n_paths, model, grid, z):
        self._on = grid.nodes[:-1] < self.until
        self._scale = 1.0 / np.sqrt(1.0 - model.params.rho**2)
        return (np.zeros(n_paths),)

    def step(self, state, ctx):
        if not self._on[ctx.interval]:
            return state
        p = ctx.model.diffusion_factor(ctx.x[:, 1])
        return (state[0] + self._scale * ctx.dW[:, 0] / p,)

    def finish(self, state):
        return state[0]


class SvjGammaAccumulator(Accumulator):
    """``int dZ / p(sigma_-)`` over ``[0, H/2]`` and ``[H/2, H]``."""

    def __init__(self, horizon: float):
        self.horizon = float(horizon)
        self.key = f"svj_gamma/{self.horizon!r}"

    def init(self, n_paths, model, grid, z):
        grid.index_of(0.5 * self.horizon)
        mid = grid.nodes[:-1]
        self._half = np.where(mid < 0.5 * self.horizon, 1, np.where(mid < self.horizon, 2, 0))
        return np.zeros(n_paths), np.zeros(n_paths)

    def step(self, state, ctx):
        half = self._half[ctx.interval]
        if half == 0:
            return state
        inc = ctx.dW[:, 0] / ctx.model.diffusion_factor(ctx.x[:, 1])
        return (state[0] + inc, state[1]) if half == 1 else (state[0], state[1] + inc)

    def finish(self, state):
        return {"first_half": state[0], "second_half": state[1]}


class ExpLevyAsianAux(Accumulator):
    """Running integrals for the exponential Levy Asian hypoelliptic weight.

    Integrals are left-point sums; ``dA^h/dh_1 = sigma^2 S0 int s S_s ds`` and
    ``dA^h/dh_2 = sigma^2 (int A^2 - A int A)``.
    """

    key = "h_derivative"

    def __init__(self, sigma: float, s0: float):
        self.sigma = float(sigma)
        self.s0 = float(s0)

    def init(self, n_paths, model, grid, z):
        return tuple(np.zeros(n_paths) for _ in range(9))

    def step(self, state, ctx):
        int_A, int_A2, int_A_dW, int_tS, W_T, a1, b1, a2, b2 = state
        S, A = ctx.x[:, 0], ctx.x[:, 1]
        dt, dW = ctx.dt, ctx.dW[:, 0]
        s2 = self.sigma**2
        dA1 = s2 * self.s0 * int_tS
        dA2 = s2 * (int_A2 - A * int_A)
        return (int_A + A * dt, int_A2 + A * A * dt, int_A_dW + A * dW, int_tS + ctx.t * S * dt,
                W_T + dW, a1 + dA1 * dt, b1 + 2 * A * dA1 * dt, a2 + dA2 * dt, b2 + 2 * A * dA2 * dt)

    def finish(self, state):
        int_A, int_A2, int_A_dW, int_tS, W_T, a1, b1, a2, b2 = state
        s2 = self.sigma**2
        P = int_A.size
        D = np.zeros((P, 2, 2, 2))
        for k, (a, b) in enumerate(((a1, b1), (a2, b2))):
            D[:, k, 0, 1] = D[:, k, 1, 0] = -s2 * self.s0 * a
            D[:, k, 1, 1] = s2 * b
        return {"D": D, "int_A": int_A, "int_A2": int_A2, "int_A_dW": int_A_dW, "W_T": W_T,
                "dA_dh1": a1, "dA2_dh1": b1, "dA_dh2": a2, "dA2_dh2": b2}


class ZeroHDerivative(Accumulator):
    """h-derivative of a deterministic Malliavin covariance: identically zero."""

    key = "h_derivative"

    def init(self, n_paths, model, grid, z):
        self._shape = (n_paths, model.dim, model.dim, model.dim)
        return ()

    def step(self, state, ctx):
        return state

    def finish(self, state):
        return {"D": np.zeros(self._shape)}


# --- weights -----------------------------------------------------------------

class Weight:
    family = "weight"
    order = 1
    needs_inverse = False

    def accumulators(self, model: ModelSpec) -> list:
        return []

    def mandatory_nodes(self) -> tuple:
        return ()

    def prepare(self, dates: tuple, horizon: float) -> "Weight":
        """Fill in date-dependent defaults from the payoff's observation dates."""
        return self

    def _integrals(self, path: SimulatedPath) -> SimulatedPath:
        accs = self.accumulators(path.model)
        have_inverse = "malliavin" in path.integrals
        if all(a.key in path.integrals for a in accs) and (have_inverse or not self.needs_inverse):
            return path
        return simulate_path(path.model, path.grid, path.noise, self.order, accs,
                             want_inverse=self.needs_inverse, initial_state=path.z)

    def evaluate(self, path: SimulatedPath) -> MalliavinWeight:
        raise NotImplementedError


def _spot_terms(model):
    zp = model.spot_jacobian()
    return [(k, float(zp[k])) for k in range(model.dim) if zp[k] != 0.0]


@dataclass(frozen=True)
class BelDelta(Weight):
    """First-order weight ``int a (R U e_k)^T dW``.

    ``coordinate=None`` gives the spot delta ``sum_k dz_k/dS0 pi_k``.
    """

    tempering: Tempering | None = None
    coordinate: int | None = None

    family = "BEL_delta"

    def prepare(self, dates, horizon):
        if self.tempering is None:
            return replace(self, tempering=Tempering.minimal(min(dates)))
        return self

    def mandatory_nodes(self):
        return () if self.tempering is None else self.tempering.nodes

    def accumulators(self, model):
        return [BelDeltaAccumulator(self.tempering)]

    def evaluate(self, path):
        if self.tempering is None:
            raise ValueError("tempering function not set; call prepare() first")
        path = self._integrals(path)
        I = path.integrals[BelDeltaAccumulator(self.tempering).key]
        if self.coordinate is not None:
            return MalliavinWeight(I[:, self.coordinate], self.family, (self.coordinate,))
        value = sum(c * I[:, k] for k, c in _spot_terms(path.model))
        return MalliavinWeight(value, self.family, ("spot",))


@dataclass(frozen=True)
class BelGamma(Weight):
    """Second-order weight on ``[0, H]`` split at ``H/2``.

    ``coordinates=None`` gives the spot gamma via the chain rule
    ``sum z'_j z'_k pi_jk + sum z''_k pi_k``.
    """

    horizon: float | None = None
    coordinates: tuple | None = None

    family = "BEL_gamma"
    order = 2

    def prepare(self, dates, horizon):
        return self if self.horizon is not None else replace(self, horizon=float(min(dates)))

    def mandatory_nodes(self):
        return () if self.horizon is None else (0.5 * self.horizon, self.horizon)

    def _delta(self):
        return BelDelta(Tempering.minimal(self.horizon))

    def accumulators(self, model):
        accs = [BelGammaAccumulator(self.horizon)]
        if self.coordinates is None and np.any(model.spot_hessian() != 0):
            accs += self._delta().accumulators(model)
        return accs

    def coordinate_weight(self, integrals, j, k):
        H = self.horizon
        g = integrals[BelGammaAccumulator(H).key]
        return (4.0 / H**2 * g["second_half"][:, j] * g["first_half"][:, k]
                + 2.0 / H * (g["grad_R"][:, j, k] + g["second_variation"][:, j, k]))

    def evaluate(self, path):
        if self.horizon is None:
            raise ValueError("horizon not set; call prepare() first")
        path = self._integrals(path)
        if self.coordinates is not None:
            j, k = self.coordinates
            return MalliavinWeight(self.coordinate_weight(path.integrals, j, k), self.family, (j, k))
        terms = _spot_terms(path.model)
        value = sum(cj * ck * self.coordinate_weight(path.integrals, j, k)
                    for j, cj in terms for k, ck in terms)
        zpp = path.model.spot_hessian()
        if np.any(zpp != 0):
            I = path.integrals[BelDeltaAccumulator(Tempering.minimal(self.horizon)).key]
            value = value + sum(zpp[k] * I[:, k] for k in range(path.model.dim) if zpp[k] != 0)
        return MalliavinWeight(value, self.family, ("spot", "spot"))


@dataclass(frozen=True)
class HypoellipticWeight(Weight):
    """Weight built from the Malliavin covariance ``C_T`` and its h-derivatives.

    ``pi_j = (int V X dW)^T C^{-1} e_j + sum_k (C^{-1} dC/dh_k C^{-1})_{k, j}``.
    Paths with ``det C < tol * C_11 * C_22`` are flagged as rejected.
    """

    coordinate: int | None = None
    tolerance: float = DET_TOLERANCE

    family = "hypoelliptic"
    needs_inverse = True

    def accumulators(self, model):
        acc = model.h_derivative_accumulator()
        return [acc if acc is not None else ZeroHDerivative()]

    def coordinate_weights(self, integrals):
        C = integrals["malliavin"]["C"]
        I = integrals["malliavin"]["stochastic_integral"]
        D = integrals["h_derivative"]["D"]
        det = np.linalg.det(C)
        diag = np.prod(np.diagonal(C, axis1=1, axis2=2), axis=1)
        rejected = ~(det > self.tolerance * diag)
        Csafe = np.where(rejected[:, None, None], np.eye(C.shape[1]), C)
        Cinv = np.linalg.inv(Csafe)
        first = np.einsum("pa,paj->pj", I, Cinv)
        second = np.einsum("pka,pkab,pbj->pj", Cinv, D, Cinv)
        pi = np.where(rejected[:, None], 0.0, first + second)
        return pi, rejected

    def evaluate(self, path):
        path = self._integrals(path)
        pi, rejected = self.coordinate_weights(path.integrals)
        if self.coordinate is not None:
            return MalliavinWeight(pi[:, self.coordinate], self.family, (self.coordinate,), rejected)
        value = sum(c * pi[:, k] for k, c in _spot_terms(path.model))
        return MalliavinWeight(value, self.family, ("spot",), rejected)


@dataclass(frozen=True)
class ExpLevyAsianClosedForm(Weight):
    """Spot delta weight ``pi_1 + pi_21 + pi_22`` written out for the exp-Levy Asian model."""

    horizon: float | None = None
    tolerance: float = DET_TOLERANCE

    family = "hypoelliptic"

    def prepare(self, dates, horizon):
        return self if self.horizon is not None else replace(self, horizon=float(horizon))

    def accumulators(self, model):
        return [model.h_derivative_accumulator()]

    def evaluate(self, path):
        path = self._integrals(path)
        aux = path.integrals["h_derivative"]
        model = path.model
        sigma, s0, T = model.sigma, model.s0, self.horizon
        B, P = aux["int_A"], aux["int_A2"]
        gap = T * P - B * B
        det = sigma**4 * s0**2 * gap
        rejected = ~(det > self.tolerance * (sigma**2 * s0**2 * T) * (sigma**2 * P))
        gap = np.where(rejected, 1.0, gap)
        det = np.where(rejected, 1.0, det)
        pi1 = (aux["W_T"] * P - aux["int_A_dW"] * B) / (sigma * s0 * gap)
        pi21 = s0**2 * sigma**6 / det**2 * (-2 * P * B * aux["dA_dh1"] + B * B * aux["dA2_dh1"])
        pi22 = s0**3 * sigma**6 / det**2 * (-B * B * aux["dA_dh2"]
                                           + T * (B * aux["dA2_dh2"] - P * aux["dA_dh2"]))
        value = np.where(rejected, 0.0, pi1 + pi21 + pi22)
        return MalliavinWeight(value, self.family, ("spot",), rejected)


@dataclass(frozen=True)
class SvjDelta(Weight):
    """Spot delta ``int_0^T1 dZ / (T1 S0 sqrt(1 - rho^2) p(sigma_-))``."""

    until: float | None = None
    double_jump: bool = False

    order = 0

    @property
    def family(self):
        return "SVJJ_delta" if self.double_jump else "SVJ_delta"

    def prepare(self, dates, horizon):
        return self if self.until is not None else replace(self, until=float(min(dates)))

    def mandatory_nodes(self):
        return () if self.until is None else (self.until,)

    def accumulators(self, model):
        return [SvjDeltaAccumulator(self.until)]

    def evaluate(self, path):
        path = self._integrals(path)
        I = path.integrals[SvjDeltaAccumulator(self.until).key]
        s0 = path.model.spot
        return MalliavinWeight(I / (self.until * s0), self.family, ("spot",))


@dataclass(frozen=True)
class SvjGamma(Weight):
    """Spot gamma from the log-coordinate gamma: ``(Gamma_x - Delta_x) / S0^2``."""

    horizon: float | None = None

    family = "SVJ_gamma"
    order = 0

    def prepare(self, dates, horizon):
        return self if self.horizon is not None else replace(self, horizon=float(min(dates)))

    def mandatory_nodes(self):
        return () if self.horizon is None else (0.5 * self.horizon, self.horizon)

    def accumulators(self, model):
        return [SvjGammaAccumulator(self.horizon)]

    def evaluate(self, path):
        path = self._integrals(path)
        g = path.integrals[SvjGammaAccumulator(self.horizon).key]
        H = self.horizon
        one_minus = 1.0 - path.model.params.rho**2
        s0 = path.model.spot
        gamma_x = 4.0 / (one_minus * H**2) * g["second_half"] * g["first_half"]
        delta_x = (g["first_half"] + g["second_half"]) / (H * np.sqrt(one_minus))
        return MalliavinWeight((gamma_x - delta_x) / s0**2, self.family, ("spot", "spot"))


# --- functional interface ----------------------------------------------------

def bel_delta_weight(path: SimulatedPath, model: ModelSpec, a: Tempering, k: int) -> MalliavinWeight:
    model.check_family("BEL_delta")
    return BelDelta(a, k).evaluate(path)


def bel_gamma_weight(path: SimulatedPath, model: ModelSpec, j: int, k: int,
                     horizon: float | None = None) -> MalliavinWeight:
    model.check_family("BEL_gamma")
    H = path.grid.horizon if horizon is None else horizon
    return BelGamma(H, (j, k)).evaluate(path)


def hypoelliptic_weight(path: SimulatedPath, model: ModelSpec, j: int) -> MalliavinWeight:
    model.check_family("hypoelliptic")
    return HypoellipticWeight(j).evaluate(path)


def svj_delta_weight(path: SimulatedPath, params=None, until: float | None = None) -> MalliavinWeight:
    path.model.check_family("SVJ_delta")
    return SvjDelta(path.grid.horizon if until is None else until).evaluate(path)


def svjj_delta_weight(path: SimulatedPath, params=None, until: float | None = None) -> MalliavinWeight:
    path.model.check_family("SVJJ_delta")
    return SvjDelta(path.grid.horizon if until is None else until, double_jump=True).evaluate(path)


def svj_gamma_weight(path: SimulatedPath, horizon: float | None = None) -> MalliavinWeight:
    path.model.check_family("SVJ_gamma")
    return SvjGamma(path.grid.horizon if horizon is None else horizon).evaluate(path)


def make_weight(family: str, **options) -> Weight:
    """Weight object from a family name (as used in run configurations)."""
    key = family.lower()
    if key == "bel_delta":
        return BelDelta(**options)
    if key == "bel_gamma":
        return BelGamma(**options)
    if key == "hypoelliptic":
        return HypoellipticWeight(**options)
    if key == "hypoelliptic_closed_form":
        return ExpLevyAsianClosedForm(**options)
    if key == "svj_delta":
        return SvjDelta(**options)
    if key == "svjj_delta":
        return SvjDelta(double_jump=True, **options)
    if key == "svj_gamma":
        return SvjGamma(**options)
    raise ValueError(f"unknown weight family {family!r}")
