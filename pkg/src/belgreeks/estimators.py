"""Greek estimators built from paths, weights and payoffs.

Paths are processed in blocks of ``BLOCK_PATHS``; block ``b`` always uses
stream id ``b``, and per-block moments are merged in block order, so a run is
bit-identical for any number of worker processes.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .models.base import ModelSpec
from .models.simulate import simulate_path
from .payoffs import LocalisationSplit, Payoff, check_legality, localise
from .stochastic_core import BLOCK_PATHS, NoiseBundle, TimeGrid, derive_seed, make_noise
from .weights import MAX_REJECTED_FRACTION, Weight, make_weight

DEFAULT_BUMP = 1e-2


class RejectedPathsError(RuntimeError):
    pass


@dataclass(frozen=True)
class EstimatorResult:
    estimate: float
    stderr: float
    variance: float
    paths: int
    steps: int
    wall_time: float
    tag: str
    seed: int
    greek: str = "delta"
    rejected: int = 0

    def agrees_with(self, other, k: float = 3.0, extra: float = 0.0) -> bool:
        """``|e1 - e2| <= k * sqrt(se1^2 + se2^2) + extra``; ``other`` may be a float."""
        if isinstance(other, EstimatorResult):
            return abs(self.estimate - other.estimate) <= k * math.hypot(self.stderr, other.stderr) + extra
        return abs(self.estimate - float(other)) <= k * self.stderr + extra


# --- streaming moments -------------------------------------------------------

@dataclass
class Moments:
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, x: np.ndarray) -> "Moments":
        if x.size == 0:
            return cls()
        mu = float(np.mean(x))
        return cls(int(x.size), mu, float(np.sum((x - mu) ** 2)))

    def merge(self, other: "Moments") -> "Moments":
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Moments(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else float("nan")


# --- estimators --------------------------------------------------------------

class Estimator:
    """Base: subclasses implement ``samples(noise, grid) -> (values, rejected)``."""

    tag = "estimator"
    greek = "delta"
    model: ModelSpec
    payoff: Payoff

    def mandatory_nodes(self) -> tuple:
        return tuple(self.payoff.dates)

    def grid(self, n_steps: int) -> TimeGrid:
        return TimeGrid.uniform(self.payoff.horizon, n_steps, sorted(set(self.mandatory_nodes())))

    def noise(self, grid: TimeGrid, seed: int, stream: int, n_paths: int) -> NoiseBundle:
        m = self.model
        return make_noise(grid, m.brownian_dim, m.jump_intensity, m.mark_law, seed, stream, n_paths)

    def samples(self, noise: NoiseBundle, grid: TimeGrid):
        raise NotImplementedError


def _payoff_values(payoff, path):
    return payoff(payoff.observe(path))


@dataclass(frozen=True)
class WeightedGreek(Estimator):
    """``mean(f(path) * pi)``."""

    model: ModelSpec
    payoff: Payoff
    weight: Weight

    def __post_init__(self):
        w = make_weight(self.weight) if isinstance(self.weight, str) else self.weight
        check_legality(w.family, self.model, self.payoff)
        object.__setattr__(self, "weight", w.prepare(self.payoff.dates, self.payoff.horizon))

    @property
    def tag(self):
        return f"weighted:{self.weight.family}"

    @property
    def greek(self):
        return "gamma" if "gamma" in self.weight.family else "delta"

    def mandatory_nodes(self):
        return tuple(self.payoff.dates) + tuple(self.weight.mandatory_nodes())

    def simulate(self, noise, grid):
        w = self.weight
        return simulate_path(self.model, grid, noise, w.order, w.accumulators(self.model),
                             want_inverse=w.needs_inverse)

    def samples(self, noise, grid):
        path = self.simulate(noise, grid)
        pi = self.weight.evaluate(path)
        vals = _payoff_values(self.payoff, path) * pi.value
        if pi.rejected is not None and pi.rejected.any():
            return vals[~pi.rejected], int(pi.rejected.sum())
        return vals, 0


@dataclass(frozen=True)
class FiniteDifferenceGreek(Estimator):
    """Central bump-and-revalue in the spot, legs on common random numbers by default."""

    model: ModelSpec
    payoff: Payoff
    bump: float = DEFAULT_BUMP
    order: int = 1
    crn: bool = True

    def __post_init__(self):
        if self.bump <= 0:
            raise ValueError("bump must be positive")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")

    @property
    def tag(self):
        return f"fd:{'crn' if self.crn else 'independent'}:{self.bump!r}"

    @property
    def greek(self):
        return "delta" if self.order == 1 else "gamma"

    @property
    def _scale(self):
        # relative bump, absolute when the spot is zero (Bachelier-type models)
        return abs(self.model.spot) or 1.0

    def _leg(self, noise, grid, shift):
        z = self.model.initial_state(self.model.spot + shift * self._scale)
        return _payoff_values(self.payoff, simulate_path(self.model, grid, noise, 0, initial_state=z))

    def samples(self, noise, grid):
        h, s0 = self.bump, self._scale
        if self.crn:
            up_noise = down_noise = mid_noise = noise
        else:
            # independent legs: same layout, unrelated seeds
            def other(i):
                return make_noise(grid, self.model.brownian_dim, self.model.jump_intensity, self.model.mark_law,
                                  derive_seed(noise.seed, 1, i), noise.stream, noise.n_paths)
            up_noise, down_noise, mid_noise = noise, other(1), other(2)
        up = self._leg(up_noise, grid, h)
        down = self._leg(down_noise, grid, -h)
        if self.order == 1:
            return (up - down) / (2 * h * s0), 0
        mid = self._leg(mid_noise, grid, 0.0)
        return (up - 2 * mid + down) / (h * s0) ** 2, 0


@dataclass(frozen=True)
class PathwiseGreek(Estimator):
    """``mean(grad f(path) . d(observations)/dS0)``; delta only, needs a.e.-differentiable f."""

    model: ModelSpec
    payoff: Payoff

    tag = "pathwise"

    def samples(self, noise, grid):
        path = simulate_path(self.model, grid, noise, 1)
        values = self.payoff.observe(path)
        grad = self.payoff.gradient(values)
        return np.sum(grad * self.payoff.observe_spot_derivative(path), axis=-1), 0


@dataclass(frozen=True)
class LocalisedGreek(Estimator):
    """Weight on the irregular part ``f - g`` plus pathwise (or CRN FD) on the smooth part ``g``.

    Both legs share every path, so the per-path sum carries the covariance.
    """

    model: ModelSpec
    payoff: Payoff
    weight: Weight | str | None = None
    split: LocalisationSplit | None = None
    smooth_method: str = "pathwise"
    bump: float = DEFAULT_BUMP

    def __post_init__(self):
        w = self.weight
        if w is None:
            fam = next((f for f in ("SVJ_delta", "SVJJ_delta", "BEL_delta", "hypoelliptic")
                        if f in self.model.families), None)
            if fam is None:
                raise ValueError(f"no delta weight available for model {self.model.name}")
            w = make_weight(fam)
        elif isinstance(w, str):
            w = make_weight(w)
        check_legality(w.family, self.model, self.payoff)
        object.__setattr__(self, "weight", w.prepare(self.payoff.dates, self.payoff.horizon))
        if self.split is None:
            object.__setattr__(self, "split", localise(self.payoff))
        if self.smooth_method not in ("pathwise", "fd"):
            raise ValueError("smooth_method must be 'pathwise' or 'fd'")
        if self.greek == "gamma" and self.smooth_method == "pathwise":
            raise ValueError("pathwise smooth leg only supports delta; use smooth_method='fd'")

    @property
    def tag(self):
        return f"localised:{self.weight.family}:{self.smooth_method}"

    @property
    def greek(self):
        return "gamma" if "gamma" in self.weight.family else "delta"

    def mandatory_nodes(self):
        return tuple(self.payoff.dates) + tuple(self.weight.mandatory_nodes())

    def samples(self, noise, grid):
        w = self.weight
        order = max(w.order, 1 if self.smooth_method == "pathwise" else 0)
        path = simulate_path(self.model, grid, noise, order, w.accumulators(self.model),
                             want_inverse=w.needs_inverse)
        pi = w.evaluate(path)
        values = self.split.irregular.observe(path)
        rough = self.split.irregular(values) * pi.value
        if self.smooth_method == "pathwise":
            grad = self.split.smooth.gradient(values)
            smooth = np.sum(grad * self.split.smooth.observe_spot_derivative(path), axis=-1)
        else:
            fd = FiniteDifferenceGreek(self.model, self.split.smooth, self.bump, 1 if self.greek == "delta" else 2)
            smooth = fd.samples(noise, grid)[0]
        vals = smooth + rough
        if pi.rejected is not None and pi.rejected.any():
            return vals[~pi.rejected], int(pi.rejected.sum())
        return vals, 0


# --- drivers -----------------------------------------------------------------

def _blocks(n_paths):
    n_blocks = -(-n_paths // BLOCK_PATHS)
    return [(b, min(BLOCK_PATHS, n_paths - b * BLOCK_PATHS)) for b in range(n_blocks)]


def _run_block(args):
    est, grid, seed, stream, size, keep = args
    vals, rejected = est.samples(est.noise(grid, seed, stream, size), grid)
    return Moments.of(np.asarray(vals, dtype=float)), rejected, (vals if keep else None)


def _map_blocks(est, grid, seed, n_paths, workers, keep):
    jobs = [(est, grid, int(seed), b, size, keep) for b, size in _blocks(n_paths)]
    if workers is None or workers <= 1 or len(jobs) == 1:
        return [_run_block(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_block, jobs))


def run_estimator(est: Estimator, n_paths: int, n_steps: int | None = None, seed: int = 0,
                  workers: int = 1, grid: TimeGrid | None = None) -> EstimatorResult:
    """Run ``est`` over ``n_paths`` paths and reduce to an :class:`EstimatorResult`."""
    if n_paths < 2:
        raise ValueError("need at least two paths")
    if grid is None:
        if n_steps is None:
            raise ValueError("give n_steps or grid")
        grid = est.grid(n_steps)
    start = time.perf_counter()
    total, rejected = Moments(), 0
    for mom, rej, _ in _map_blocks(est, grid, seed, n_paths, workers, False):
        total = total.merge(mom)
        rejected += rej
    if rejected > MAX_REJECTED_FRACTION * n_paths:
        raise RejectedPathsError(f"{rejected} of {n_paths} paths rejected (degenerate covariance); "
                                 f"limit is a fraction {MAX_REJECTED_FRACTION}")
    var = total.variance
    return EstimatorResult(total.mean, math.sqrt(var / total.n), var, total.n, grid.n_steps,
                           time.perf_counter() - start, est.tag, int(seed), est.greek, rejected)


def collect_samples(est: Estimator, n_paths: int, n_steps: int | None = None, seed: int = 0,
                    workers: int = 1, grid: TimeGrid | None = None) -> np.ndarray:
    """Per-path samples of ``est`` in block order (for variance studies)."""
    if grid is None:
        grid = est.grid(n_steps)
    return np.concatenate([v for _, _, v in _map_blocks(est, grid, seed, n_paths, workers, True)])


@dataclass(frozen=True)
class VarianceEstimate:
    variance: float
    stderr: float
    paths: int

    @classmethod
    def of(cls, samples) -> "VarianceEstimate":
        x = np.asarray(samples, dtype=float)
        n = x.size
        c = x - x.mean()
        s2 = float(np.mean(c * c))
        m4 = float(np.mean(c**4))
        return cls(s2 * n / (n - 1), math.sqrt(max(m4 - s2 * s2, 0.0) / n), n)


def weight_variance(model, payoff, weight, n_paths, n_steps, seed=0, workers=1) -> VarianceEstimate:
    """Variance of the bare weight ``pi`` (constant payoff) with its standard error."""
    from .payoffs import Payoff, ConstantProfile

    unit = Payoff(ConstantProfile(1.0), payoff.dates, payoff.coefficients, payoff.component, "unit")
    w = make_weight(weight) if isinstance(weight, str) else weight
    est = WeightedGreek(model, unit, w.prepare(payoff.dates, payoff.horizon))
    return VarianceEstimate.of(collect_samples(est, n_paths, n_steps, seed, workers))


@dataclass(frozen=True)
class ConvergenceRow:
    paths: int
    steps: int
    seed: int
    result: EstimatorResult


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)

    def column(self, name):
        if name in ("paths", "steps", "seed"):
            return np.array([getattr(r, name) for r in self.rows])
        return np.array([getattr(r.result, name) for r in self.rows])

    def slope(self, x="paths", y="stderr") -> float:
        """Least-squares slope of log y against log x."""
        return float(np.polyfit(np.log(self.column(x)), np.log(self.column(y)), 1)[0])


class CellFailure(RuntimeError):
    def __init__(self, paths, steps, cause):
        super().__init__(f"cell (paths={paths}, steps={steps}) failed: {cause}")
        self.paths, self.steps, self.cause = paths, steps, cause


def convergence_study(est: Estimator, paths=(), steps=(), seed: int = 0, workers: int = 1) -> ConvergenceTable:
    """Run ``est`` over every (paths, steps) cell with an independent derived seed per cell."""
    paths = list(paths)
    steps = list(steps)
    if any(b <= a for a, b in zip(paths, paths[1:])) or any(b <= a for a, b in zip(steps, steps[1:])):
        raise ValueError("schedules must be increasing")
    table = ConvergenceTable()
    for i, n in enumerate(paths):
        for j, s in enumerate(steps):
            cell_seed = derive_seed(seed, i, j)
            try:
                res = run_estimator(est, n, s, cell_seed, workers)
            except Exception as exc:
                raise CellFailure(n, s, exc) from exc
            table.rows.append(ConvergenceRow(n, s, cell_seed, res))
    return table


# --- functional interface ----------------------------------------------------

def weighted_greek(model, payoff, weight_family, paths, grid_steps, seed=0, workers=1) -> EstimatorResult:
    return run_estimator(WeightedGreek(model, payoff, weight_family), paths, grid_steps, seed, workers)


def fd_greek(model, payoff, bump=DEFAULT_BUMP, order=1, paths=10_000, grid_steps=64, seed=0, workers=1,
             crn=True) -> EstimatorResult:
    return run_estimator(FiniteDifferenceGreek(model, payoff, bump, order, crn), paths, grid_steps, seed, workers)


def pathwise_greek(model, payoff, paths, grid_steps, seed=0, workers=1) -> EstimatorResult:
    return run_estimator(PathwiseGreek(model, payoff), paths, grid_steps, seed, workers)


def localised_greek(model, payoff, split=None, paths=10_000, grid_steps=64, seed=0, workers=1,
                    weight=None, smooth_method="pathwise") -> EstimatorResult:
    return run_estimator(LocalisedGreek(model, payoff, weight, split, smooth_method), paths, grid_steps, seed,
                         workers)
