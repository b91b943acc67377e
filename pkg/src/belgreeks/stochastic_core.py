"""Random streams, time grids and per-batch noise.

All randomness in the package comes from here. A stream is a pure function of
``(seed, stream id, purpose)``: the stream id names a fixed-size block of
``BLOCK_PATHS`` consecutive paths, so splitting a run over any number of
workers never changes which numbers a given path sees.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

BLOCK_PATHS = 8192


class Purpose(enum.IntEnum):
    DIFFUSION = 0
    JUMPS = 1
    MARKS = 2
    BRIDGE = 3


@dataclass(frozen=True)
class RngStreamKey:
    seed: int
    path: int
    purpose: Purpose

    def generator(self) -> np.random.Generator:
        if self.seed < 0 or self.path < 0:
            raise ValueError("seed and stream id must be non-negative")
        ss = np.random.SeedSequence(entropy=int(self.seed),
                                    spawn_key=(int(self.path), int(self.purpose)))
        return np.random.Generator(np.random.Philox(ss))

    def with_purpose(self, purpose: Purpose) -> "RngStreamKey":
        return RngStreamKey(self.seed, self.path, purpose)


def derive_seed(seed: int, *labels: int) -> int:
    """Independent 63-bit seed for a sub-experiment (e.g. one convergence cell)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(v) for v in labels))
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1, 2**32], dtype=np.uint64)) >> 1


class TimeGrid:
    """Strictly increasing integration nodes ``0 = t_0 < ... < t_n = T``.

    ``mandatory`` nodes (observation dates, window split points) are guaranteed
    to be exact grid nodes.
    """

    def __init__(self, nodes, mandatory=()):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 1:
            raise ValueError("grid needs at least one node")
        if nodes[0] != 0.0:
            raise ValueError("grid must start at 0")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        for m in mandatory:
            if not np.any(nodes == m):
                raise ValueError(f"mandatory node {m} is not a grid node")
        nodes.setflags(write=False)
        self.nodes = nodes
        self.mandatory = tuple(sorted(float(m) for m in mandatory))

    @classmethod
    def uniform(cls, horizon: float, n_steps: int, mandatory=()) -> "TimeGrid":
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        nodes = list(np.linspace(0.0, horizon, n_steps + 1))
        nodes[-1] = float(horizon)
        tol = 1e-9 * horizon
        for m in mandatory:
            m = float(m)
            if not 0.0 < m <= horizon:
                raise ValueError(f"mandatory node {m} outside (0, {horizon}]")
            j = int(np.argmin([abs(v - m) for v in nodes]))
            if abs(nodes[j] - m) <= tol and j > 0:
                nodes[j] = m
            else:
                nodes.append(m)
        return cls(np.unique(nodes), mandatory)

    @classmethod
    def single(cls) -> "TimeGrid":
        return cls([0.0])

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_steps(self) -> int:
        return self.nodes.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.nodes)

    def index_of(self, t: float) -> int:
        idx = np.flatnonzero(self.nodes == t)
        if idx.size == 0:
            raise KeyError(f"{t} is not a grid node")
        return int(idx[0])

    def __eq__(self, other):
        return (isinstance(other, TimeGrid) and np.array_equal(self.nodes, other.nodes)
                and self.mandatory == other.mandatory)

    def __hash__(self):
        return hash((self.nodes.tobytes(), self.mandatory))

    def __repr__(self):
        return f"TimeGrid(T={self.horizon}, n_steps={self.n_steps}, mandatory={self.mandatory})"


# --- mark laws -------------------------------------------------------------

class MarkLaw:
    """Distribution of a scalar jump mark, optionally restricted to [lo, hi]."""

    lo: float = -np.inf
    hi: float = np.inf

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def mass(self) -> float:
        """Probability of the retained range [lo, hi]."""
        return 1.0

    def restricted_mean(self) -> float:
        """E[y; lo <= y <= hi], the compensator per unit intensity."""
        raise NotImplementedError

    def contains(self, y: np.ndarray) -> np.ndarray:
        return (y >= self.lo) & (y <= self.hi)


@dataclass(frozen=True)
class PointMass(MarkLaw):
    value: float = 1.0

    def sample(self, rng, n):
        return np.full(n, self.value)

    def restricted_mean(self):
        return self.value


@dataclass(frozen=True)
class NormalMarks(MarkLaw):
    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if self.sd < 0:
            raise ValueError("sd must be non-negative")

    def sample(self, rng, n):
        return self.mean + self.sd * rng.standard_normal(n)

    def restricted_mean(self):
        return self.mean


@dataclass(frozen=True)
class LogNormalReturnMarks(MarkLaw):
    """Relative jump ``y = exp(J) - 1`` with ``J ~ N(mean, sd^2)``, restricted to [lo, hi]."""

    mean: float = 0.0
    sd: float = 0.1
    lo: float = -1.0
    hi: float = np.inf

    def __post_init__(self):
        if self.lo < -1.0:
            raise ValueError("relative jumps must exceed -1")

    def _log_bounds(self):
        from scipy.stats import norm

        a = -np.inf if self.lo <= -1.0 else np.log1p(self.lo)
        b = np.inf if np.isinf(self.hi) else np.log1p(self.hi)
        return (a - self.mean) / self.sd, (b - self.mean) / self.sd, norm

    def sample(self, rng, n):
        return np.expm1(self.mean + self.sd * rng.standard_normal(n))

    def mass(self):
        a, b, norm = self._log_bounds()
        return float(norm.cdf(b) - norm.cdf(a))

    def restricted_mean(self):
        a, b, norm = self._log_bounds()
        # E[e^J; a<Z<b] = e^{m + s^2/2} (Phi(b - s) - Phi(a - s))
        growth = np.exp(self.mean + 0.5 * self.sd**2) * (norm.cdf(b - self.sd) - norm.cdf(a - self.sd))
        return float(growth - (norm.cdf(b) - norm.cdf(a)))

    def truncated(self, delta: float) -> "LogNormalReturnMarks":
        if not 0.0 < delta < 1.0:
            raise ValueError("truncation level must lie in (0, 1)")
        return LogNormalReturnMarks(self.mean, self.sd, -1.0 + delta, 1.0 / delta)


# --- jumps -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JumpEvents:
    """Ragged batch of jump events, sorted by (path, time)."""

    counts: np.ndarray
    path: np.ndarray
    times: np.ndarray
    marks: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.counts.size

    def for_path(self, p: int):
        sel = self.path == p
        return self.times[sel], self.marks[sel]

    @classmethod
    def empty(cls, n_paths: int) -> "JumpEvents":
        z = np.zeros(0)
        return cls(np.zeros(n_paths, dtype=np.int64), np.zeros(0, dtype=np.int64), z, z)


def sample_compound_poisson(intensity: float, mark_law: MarkLaw | None, horizon: float,
                            key: RngStreamKey, n_paths: int = 1) -> JumpEvents:
    """Compound Poisson jump stream on (0, horizon] for a batch of paths.

    Marks outside the law's retained range are thinned out, which samples the
    restricted jump measure exactly.
    """
    if intensity < 0:
        raise ValueError("intensity must be non-negative")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if intensity == 0 or mark_law is None:
        return JumpEvents.empty(n_paths)
    rng = key.with_purpose(Purpose.JUMPS).generator()
    counts = rng.poisson(intensity * horizon, size=n_paths)
    total = int(counts.sum())
    path = np.repeat(np.arange(n_paths), counts)
    times = horizon - horizon * rng.random(total)
    marks = mark_law.sample(key.with_purpose(Purpose.MARKS).generator(), total)
    order = np.lexsort((times, path))
    path, times, marks = path[order], times[order], np.asarray(marks, dtype=float)[order]
    keep = mark_law.contains(marks)
    if not keep.all():
        path, times, marks = path[keep], times[keep], marks[keep]
        counts = np.bincount(path, minlength=n_paths)
    return JumpEvents(counts.astype(np.int64), path.astype(np.int64), times, marks)


def sample_brownian(grid: TimeGrid, dim: int, key: RngStreamKey, n_paths: int = 1) -> np.ndarray:
    """Brownian increments of shape (n_paths, n_steps, dim), path-major."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = key.with_purpose(Purpose.DIFFUSION).generator()
    z = rng.standard_normal((n_paths, grid.n_steps, dim))
    return z * np.sqrt(grid.dt)[None, :, None]


@dataclass(frozen=True, eq=False)
class NoiseBundle:
    """All randomness for a batch of paths on one grid.

    ``jump_dW`` holds, for each jump, the Brownian increment from the previous
    integration node (grid node or earlier jump in the same interval) up to the
    jump time; it is drawn from the Brownian bridge so that sub-increments add up
    to the grid increment exactly.
    """

    grid: TimeGrid
    dW: np.ndarray
    jumps: JumpEvents
    jump_interval: np.ndarray
    jump_rank: np.ndarray
    jump_dW: np.ndarray
    seed: int
    stream: int

    @property
    def n_paths(self) -> int:
        return self.dW.shape[0]

    @property
    def brownian_dim(self) -> int:
        return self.dW.shape[2]

    def brownian_path(self) -> np.ndarray:
        """W at the grid nodes, shape (n_paths, n_steps + 1, dim)."""
        W = np.zeros((self.n_paths, self.grid.n_steps + 1, self.brownian_dim))
        np.cumsum(self.dW, axis=1, out=W[:, 1:])
        return W


def _bridge_split(grid, dW, jumps, key):
    nodes = grid.nodes
    K = jumps.times.size
    m = dW.shape[2]
    interval = np.searchsorted(nodes, jumps.times, side="left") - 1
    interval = np.clip(interval, 0, grid.n_steps - 1)
    rank = np.zeros(K, dtype=np.int64)
    if K:
        new_group = np.ones(K, dtype=bool)
        new_group[1:] = (jumps.path[1:] != jumps.path[:-1]) | (interval[1:] != interval[:-1])
        starts = np.flatnonzero(new_group)
        group_start = np.repeat(starts, np.diff(np.append(starts, K)))
        rank = np.arange(K) - group_start
    jump_dW = np.zeros((K, m))
    if K == 0:
        return interval, rank, jump_dW
    z = key.with_purpose(Purpose.BRIDGE).generator().standard_normal((K, m))
    used = np.zeros((K, m))
    prev_t = nodes[interval].copy()
    for r in range(int(rank.max()) + 1):
        sel = np.flatnonzero(rank == r)
        if r > 0:
            prev = sel - 1
            prev_t[sel] = jumps.times[prev]
            used[sel] = used[prev] + jump_dW[prev]
        end = nodes[interval[sel] + 1]
        span = end - prev_t[sel]
        s = jumps.times[sel] - prev_t[sel]
        frac = np.where(span > 0, s / np.where(span > 0, span, 1.0), 0.0)
        remaining = dW[jumps.path[sel], interval[sel]] - used[sel]
        var = np.clip(s * (span - s) / np.where(span > 0, span, 1.0), 0.0, None)
        jump_dW[sel] = remaining * frac[:, None] + np.sqrt(var)[:, None] * z[sel]
    return interval, rank, jump_dW


def make_noise(grid: TimeGrid, brownian_dim: int, intensity: float, mark_law: MarkLaw | None,
               seed: int, stream: int, n_paths: int) -> NoiseBundle:
    key = RngStreamKey(seed, stream, Purpose.DIFFUSION)
    dW = sample_brownian(grid, brownian_dim, key, n_paths)
    if grid.n_steps == 0:
        jumps = JumpEvents.empty(n_paths)
    else:
        jumps = sample_compound_poisson(intensity, mark_law, grid.horizon, key, n_paths)
    interval, rank, jump_dW = _bridge_split(grid, dW, jumps, key)
    return NoiseBundle(grid, dW, jumps, interval, rank, jump_dW, int(seed), int(stream))


def paired_noise_for_bump(base: NoiseBundle) -> NoiseBundle:
    """Noise for a bumped finite-difference leg: the very same draws."""
    return base
