"""Jump-adapted Euler scheme with pathwise first and second variations.

Between jump times the state follows the Euler-Maruyama step with
coefficients frozen at the left point. Each jump time splits its grid
interval; the Brownian increment over the interval is shared between the
pieces via the Brownian bridge (see ``NoiseBundle.jump_dW``), so the
grid increments themselves are never altered.

Auxiliary integrals are produced by accumulators: small objects with
``init(n_paths, model, grid, z)`` returning a tuple of arrays (leading axis =
path) and ``step(state, ctx)`` returning the updated tuple. Every accumulator
sees the same left-point context as the state update, which keeps all
integrands adapted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..stochastic_core import NoiseBundle, TimeGrid
from .base import ModelSpec, NonFiniteStateError, SingularVariationError


class StepContext:
    """Left-point quantities for one Euler step over a set of rows.

    ``t``, ``dt`` are (P,) arrays; ``interval`` is the grid interval index.
    Expensive derived quantities (diffusion matrix, right inverse and its
    gradient) are computed once and cached.
    """

    __slots__ = ("model", "t", "dt", "dW", "x", "U", "U2", "interval", "_X", "_dX", "_R", "_dR")

    def __init__(self, model, t, dt, dW, x, U, U2, interval):
        self.model = model
        self.t = t
        self.dt = dt
        self.dW = dW
        self.x = x
        self.U = U
        self.U2 = U2
        self.interval = interval
        self._X = self._dX = self._R = self._dR = None

    @property
    def X(self):
        if self._X is None:
            self._X = self.model.diffusion(self.t, self.x)
        return self._X

    @property
    def dX(self):
        if self._dX is None:
            self._dX = self.model.diffusion_jac(self.t, self.x)
        return self._dX

    @property
    def R(self):
        if self._R is None:
            self._R = self.model.right_inverse(self.t, self.x, self.X)
        return self._R

    @property
    def dR(self):
        if self._dR is None:
            self._dR = self.model.right_inverse_jac(self.t, self.x, self.X, self.dX, self.R)
        return self._dR


class Accumulator:
    key = "accumulator"
    needs_order = 0

    def init(self, n_paths: int, model: ModelSpec, grid: TimeGrid, z: np.ndarray) -> tuple:
        raise NotImplementedError

    def step(self, state: tuple, ctx: StepContext) -> tuple:
        raise NotImplementedError

    def finish(self, state: tuple):
        return state


class MalliavinCovarianceAccumulator(Accumulator):
    """``C_T = int (V X)(V X)^T dt`` and ``int V X dW`` with ``V = U^{-1}``."""

    key = "malliavin"
    needs_order = 1

    def init(self, n_paths, model, grid, z):
        d = model.dim
        return np.zeros((n_paths, d, d)), np.zeros((n_paths, d))

    def step(self, state, ctx):
        C, I = state
        U = ctx.U
        det = np.linalg.det(U)
        if np.any(~np.isfinite(det)) or np.any(np.abs(det) < 1e-300):
            bad = int(np.flatnonzero(~(np.abs(det) >= 1e-300))[0])
            raise SingularVariationError(
                f"first variation is singular at grid interval {ctx.interval}, time {float(np.broadcast_to(ctx.t, det.shape)[bad])}")
        VX = np.linalg.solve(U, ctx.X)
        C = C + np.einsum("pam,pbm->pab", VX, VX) * ctx.dt[:, None, None]
        I = I + np.einsum("pam,pm->pa", VX, ctx.dW)
        return C, I

    def finish(self, state):
        C, I = state
        return {"C": C, "stochastic_integral": I}


@dataclass(eq=False)
class SimulatedPath:
    """Result of integrating a batch of paths on one noise bundle.

    ``obs_*`` arrays are indexed by the grid's mandatory nodes (in sorted
    order). ``node_x`` / ``node_U`` and ``jump_left`` / ``jump_right`` are
    only filled when recording was requested.
    """

    model: ModelSpec
    grid: TimeGrid
    noise: NoiseBundle
    z: np.ndarray
    x_T: np.ndarray
    U_T: np.ndarray | None
    U2_T: np.ndarray | None
    obs_times: tuple
    obs_x: np.ndarray
    obs_U: np.ndarray | None
    obs_U2: np.ndarray | None
    integrals: dict = field(default_factory=dict)
    node_x: np.ndarray | None = None
    node_U: np.ndarray | None = None
    jump_left: np.ndarray | None = None
    jump_right: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.x_T.shape[0]

    def observation(self, time: float, component: str = "spot") -> np.ndarray:
        i = self.obs_times.index(float(time))
        return self.model.observe(self.obs_x[:, i], component, time)


def _euler(model, order, ctx):
    x, U, U2 = ctx.x, ctx.U, ctx.U2
    custom = model.step_map(ctx, order)
    if custom is not None:
        xn, DG, D2G = custom
        Un = DG @ U if order >= 1 else None
        U2n = None
        if order >= 2:
            U2n = np.einsum("pdc,pcjk->pdjk", DG, U2) + np.einsum("pdce,pcj,pek->pdjk", D2G, U, U)
        return xn, Un, U2n
    dt = ctx.dt
    X = ctx.X
    xn = x + model.drift(ctx.t, x) * dt[:, None] + np.einsum("pdm,pm->pd", X, ctx.dW)
    Un = U2n = None
    if order >= 1:
        A = model.drift_jac(ctx.t, x) * dt[:, None, None] + np.einsum("pdmc,pm->pdc", ctx.dX, ctx.dW)
        Un = U + A @ U
        if order >= 2:
            H = (model.drift_hess(ctx.t, x) * dt[:, None, None, None]
                 + np.einsum("pdmce,pm->pdce", model.diffusion_hess(ctx.t, x), ctx.dW))
            U2n = (U2 + np.einsum("pdc,pcjk->pdjk", A, U2)
                   + np.einsum("pdce,pcj,pek->pdjk", H, U, U))
    return xn, Un, U2n


def _apply_jump(model, order, t, x, U, U2, y):
    xn = x + model.jump(t, x, y)
    Un = U2n = None
    if order >= 1:
        JY = model.jump_jac(t, x, y)
        Un = U + JY @ U
        if order >= 2:
            U2n = (U2 + np.einsum("pdc,pcjk->pdjk", JY, U2)
                   + np.einsum("pdce,pcj,pek->pdjk", model.jump_hess(t, x, y), U, U))
    return xn, Un, U2n


def _take(arr, rows):
    return None if arr is None else arr[rows]


def _put(dst, rows, src):
    if dst is not None:
        dst[rows] = src


def _check_finite(x, where):
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(x), axis=1))[0])
        raise NonFiniteStateError(f"non-finite state on path row {bad} at {where}")


def simulate_path(model: ModelSpec, grid: TimeGrid, noise: NoiseBundle, variation_order: int = 1,
                  integrals=(), record: bool = False, initial_state=None,
                  want_inverse: bool = False) -> SimulatedPath:
    """Integrate every path of ``noise`` through ``model`` on ``grid``.

    ``integrals`` is a sequence of accumulators; their results land in
    ``SimulatedPath.integrals`` under each accumulator's ``key``.
    ``want_inverse`` adds the Malliavin covariance accumulator.
    """
    if variation_order not in (0, 1, 2):
        raise ValueError("variation_order must be 0, 1 or 2")
    if noise.grid != grid:
        raise ValueError("noise bundle was generated on a different grid")
    if noise.brownian_dim != model.brownian_dim:
        raise ValueError("noise Brownian dimension does not match the model")
    accs = list(integrals)
    if want_inverse:
        accs.append(MalliavinCovarianceAccumulator())
    order = max([variation_order] + [a.needs_order for a in accs])

    P, d = noise.n_paths, model.dim
    z = model.initial_state() if initial_state is None else np.asarray(initial_state, dtype=float)
    x = np.tile(z, (P, 1))
    U = np.tile(np.eye(d), (P, 1, 1)) if order >= 1 else None
    U2 = np.zeros((P, d, d, d)) if order >= 2 else None
    states = [a.init(P, model, grid, z) for a in accs]

    nodes = grid.nodes
    mand = grid.mandatory
    mand_idx = {grid.index_of(m): j for j, m in enumerate(mand)}
    obs_x = np.zeros((P, len(mand), d))
    obs_U = np.zeros((P, len(mand), d, d)) if order >= 1 else None
    obs_U2 = np.zeros((P, len(mand), d, d, d)) if order >= 2 else None
    node_x = node_U = jump_left = jump_right = None
    if record:
        node_x = np.zeros((P, grid.n_steps + 1, d))
        node_x[:, 0] = x
        if order >= 1:
            node_U = np.zeros((P, grid.n_steps + 1, d, d))
            node_U[:, 0] = U
        jump_left = np.zeros((noise.jumps.times.size, d))
        jump_right = np.zeros_like(jump_left)

    jumps = noise.jumps
    by_interval = {}
    if jumps.times.size:
        order_iv = np.argsort(noise.jump_interval, kind="stable")
        ivs = noise.jump_interval[order_iv]
        bounds = np.flatnonzero(np.diff(ivs)) + 1
        for chunk in np.split(order_iv, bounds):
            by_interval[int(noise.jump_interval[chunk[0]])] = chunk

    ones = np.ones(P)
    for i in range(grid.n_steps):
        t0, dt = nodes[i], nodes[i + 1] - nodes[i]
        ctx = StepContext(model, t0 * ones, dt * ones, noise.dW[:, i], x, U, U2, i)
        new_states = [a.step(s, ctx) for a, s in zip(accs, states)]
        xn, Un, U2n = _euler(model, order, ctx)

        idx = by_interval.get(i)
        if idx is not None:
            rows = np.unique(jumps.path[idx])
            loc_of = np.searchsorted(rows, jumps.path[idx])
            sx, sU, sU2 = x[rows], _take(U, rows), _take(U2, rows)
            sst = [tuple(arr[rows] for arr in s) for s in states]
            cur_t = np.full(rows.size, t0)
            used = np.zeros((rows.size, model.brownian_dim))
            ranks = noise.jump_rank[idx]
            for r in range(int(ranks.max()) + 1):
                sel = idx[ranks == r]
                loc = loc_of[ranks == r]
                tau = jumps.times[sel]
                piece = noise.jump_dW[sel]
                c = StepContext(model, cur_t[loc], tau - cur_t[loc], piece, sx[loc],
                                _take(sU, loc), _take(sU2, loc), i)
                sub_states = [tuple(arr[loc] for arr in s) for s in sst]
                sub_states = [a.step(s, c) for a, s in zip(accs, sub_states)]
                lx, lU, lU2 = _euler(model, order, c)
                _check_finite(lx, f"t={tau.min()} (pre-jump)")
                if record:
                    jump_left[sel] = lx
                jx, jU, jU2 = _apply_jump(model, order, tau, lx, lU, lU2, jumps.marks[sel])
                _check_finite(jx, f"t={tau.min()} (post-jump)")
                if record:
                    jump_right[sel] = jx
                sx[loc] = jx
                _put(sU, loc, jU)
                _put(sU2, loc, jU2)
                for s, ns in zip(sst, sub_states):
                    for arr, narr in zip(s, ns):
                        arr[loc] = narr
                cur_t[loc] = tau
                used[loc] += piece
            c = StepContext(model, cur_t, nodes[i + 1] - cur_t, noise.dW[rows, i] - used,
                            sx, sU, sU2, i)
            sst = [a.step(s, c) for a, s in zip(accs, sst)]
            fx, fU, fU2 = _euler(model, order, c)
            xn[rows] = fx
            _put(Un, rows, fU)
            _put(U2n, rows, fU2)
            for s, ns in zip(new_states, sst):
                for arr, narr in zip(s, ns):
                    arr[rows] = narr

        _check_finite(xn, f"grid node {i + 1} (t={nodes[i + 1]})")
        x, U, U2, states = xn, Un, U2n, new_states
        j = mand_idx.get(i + 1)
        if j is not None:
            obs_x[:, j] = x
            _put(obs_U, (slice(None), j), U)
            _put(obs_U2, (slice(None), j), U2)
        if record:
            node_x[:, i + 1] = x
            _put(node_U, (slice(None), i + 1), U)

    results = {a.key: a.finish(s) for a, s in zip(accs, states)}
    return SimulatedPath(model, grid, noise, z, x, U, U2, tuple(mand), obs_x, obs_U, obs_U2,
                         results, node_x, node_U, jump_left, jump_right)


def malliavin_covariance(path: SimulatedPath, model: ModelSpec | None = None) -> np.ndarray:
    """Malliavin covariance ``C_T`` for each path, shape (P, d, d)."""
    try:
        return path.integrals["malliavin"]["C"]
    except KeyError:
        raise ValueError("path was simulated without the inverse variation; "
                         "pass want_inverse=True to simulate_path") from None
