"""Reproducible Wiener increments keyed by ``(master_seed, path_index)``.

Each path gets its own Philox (counter-based) stream derived from the pair
``(master_seed, path_index)`` through :class:`numpy.random.SeedSequence`, so a
path never depends on which worker generated it or in which order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import NoiseError


def uniform_time_grid(horizon: float, steps: int) -> np.ndarray:
    if steps < 1 or not horizon > 0:
        raise NoiseError(f"need horizon > 0 and steps >= 1, got {horizon}, {steps}")
    grid = np.linspace(0.0, horizon, steps + 1)
    grid[-1] = horizon
    return grid


def _check_time_grid(time_grid) -> np.ndarray:
    tg = np.asarray(time_grid, dtype=float)
    if tg.ndim != 1 or tg.size < 2:
        raise NoiseError("time grid needs at least two points")
    if tg[0] != 0.0:
        raise NoiseError(f"time grid must start at 0, got {tg[0]}")
    if np.any(np.diff(tg) <= 0):
        raise NoiseError("time grid must be strictly increasing")
    return tg


@dataclass(frozen=True, eq=False)
class WienerPath:
    """Increments of ``d1`` independent Wiener processes on a time grid.

    ``increments[i, r]`` is ``W^r(t_{i+1}) - W^r(t_i)``.
    """

    noise_count: int
    time_grid: np.ndarray = field(repr=False)
    increments: np.ndarray = field(repr=False)
    master_seed: int = 0
    path_index: int = 0

    def __post_init__(self):
        tg = _check_time_grid(self.time_grid)
        inc = np.array(self.increments, dtype=float).reshape(tg.size - 1, self.noise_count)
        tg = tg.copy()
        tg.flags.writeable = False
        inc.flags.writeable = False
        object.__setattr__(self, "time_grid", tg)
        object.__setattr__(self, "increments", inc)

    @property
    def steps(self) -> int:
        return self.time_grid.size - 1

    @property
    def horizon(self) -> float:
        return float(self.time_grid[-1])

    def values(self) -> np.ndarray:
        """``W`` at every grid time, shape ``(n + 1, d1)``, starting at zero."""
        out = np.zeros((self.steps + 1, self.noise_count))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def index_of(self, t: float) -> int:
        i = int(np.searchsorted(self.time_grid, t))
        for j in (i - 1, i):
            if 0 <= j <= self.steps and abs(self.time_grid[j] - t) <= 1e-12 * max(1.0, abs(t)):
                return j
        raise NoiseError(f"time {t} is not on the path's time grid")

    def value_at(self, t: float) -> np.ndarray:
        return value_at(self, t)

    def coarsen(self, factor: int) -> "WienerPath":
        """Same Brownian path observed every ``factor`` steps."""
        if factor < 1 or self.steps % factor:
            raise NoiseError(f"cannot coarsen {self.steps} steps by {factor}")
        inc = self.increments.reshape(self.steps // factor, factor, self.noise_count).sum(axis=1)
        return WienerPath(self.noise_count, self.time_grid[::factor], inc, self.master_seed, self.path_index)

    def digest(self) -> str:
        """SHA-256 of the time grid and increment bytes."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.time_grid).tobytes())
        h.update(np.ascontiguousarray(self.increments).tobytes())
        return h.hexdigest()


def path_generator(master_seed: int, path_index: int) -> np.random.Generator:
    if master_seed < 0 or path_index < 0:
        raise NoiseError("seed and path index must be nonnegative")
    seq = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(path_index)])
    return np.random.Generator(np.random.Philox(seq))


def sample_path(master_seed: int, path_index: int, time_grid, noise_count: int) -> WienerPath:
    """Gaussian increments with variance ``t_{i+1} - t_i`` for each component."""
    tg = _check_time_grid(time_grid)
    if noise_count < 0:
        raise NoiseError("noise count must be nonnegative")
    rng = path_generator(master_seed, path_index)
    z = rng.standard_normal((tg.size - 1, noise_count))
    inc = z * np.sqrt(np.diff(tg))[:, None]
    return WienerPath(noise_count, tg, inc, master_seed, path_index)


def value_at(path: WienerPath, t: float) -> np.ndarray:
    i = path.index_of(t)
    return np.cumsum(path.increments[:i], axis=0)[-1] if i else np.zeros(path.noise_count)
