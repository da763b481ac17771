"""Uniform lattices, grid functions, shifts and grid nesting.

The whole-space lattice ``h Z^d`` is truncated to a finite box of nodes.
Two boundary modes are supported:

* ``periodic``: indices wrap, the box is a torus of length ``N h`` per axis.
* ``zero-padded``: reads outside the node range return zero; errors must be
  measured on an interior box kept away from the truncation edge.

Node ``i`` on axis ``a`` sits at ``origin[a] + i * spacing``. Refinement halves
the spacing (exact in binary floating point), so coarse node ``i`` and fine
node ``2 i`` have bit-identical coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GridError, NestingError

PERIODIC = "periodic"
ZERO_PADDED = "zero-padded"
BOUNDARY_MODES = (PERIODIC, ZERO_PADDED)


@dataclass(frozen=True)
class Grid:
    """Uniform lattice of spacing ``h`` over a truncated domain.

    Attributes
    ----------
    dim : int
        Spatial dimension ``d``.
    spacing : float
        Mesh parameter ``h``; identical on every axis.
    extent : tuple of int
        Node count per axis.
    origin : tuple of float
        Coordinate of node ``(0, ..., 0)``.
    boundary_mode : str
        ``"periodic"`` or ``"zero-padded"``.
    box : tuple of (int, int)
        Inclusive index range per axis on which errors are measured.
    """

    dim: int
    spacing: float
    extent: tuple
    origin: tuple
    boundary_mode: str
    box: tuple

    def __post_init__(self):
        if self.dim < 1:
            raise GridError(f"dimension must be positive, got {self.dim}")
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise GridError(f"spacing must be positive and finite, got {self.spacing}")
        if len(self.extent) != self.dim or len(self.origin) != self.dim or len(self.box) != self.dim:
            raise GridError("extent, origin and box must have one entry per axis")
        if any(n < 2 for n in self.extent):
            raise GridError(f"every axis needs at least 2 nodes, got {self.extent}")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise GridError(f"unknown boundary mode {self.boundary_mode!r}")
        for (lo, hi), n in zip(self.box, self.extent):
            if not 0 <= lo <= hi <= n - 1:
                raise GridError(f"measurement box {self.box} outside node range {self.extent}")
            if self.boundary_mode == ZERO_PADDED and (lo < 1 or hi > n - 2):
                raise GridError("zero-padded grids need a strictly interior measurement box")

    @property
    def shape(self) -> tuple:
        return tuple(self.extent)

    @property
    def size(self) -> int:
        return math.prod(self.extent)

    @property
    def strides(self) -> tuple:
        """Row-major strides (in elements) of the flat value array."""
        out = [1] * self.dim
        for a in range(self.dim - 2, -1, -1):
            out[a] = out[a + 1] * self.extent[a + 1]
        return tuple(out)

    @property
    def periodic(self) -> bool:
        return self.boundary_mode == PERIODIC

    def flat_index(self, index: Sequence[int]) -> int:
        return sum(i * s for i, s in zip(index, self.strides))

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return self.origin[axis] + np.arange(self.extent[axis]) * self.spacing

    def coordinates(self) -> tuple:
        """Coordinate arrays, one per axis, each broadcast to ``shape``."""
        axes = [self.axis_coordinates(a) for a in range(self.dim)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def node(self, index: Sequence[int]) -> tuple:
        return tuple(o + i * self.spacing for o, i in zip(self.origin, index))

    @property
    def box_slices(self) -> tuple:
        return tuple(slice(lo, hi + 1) for lo, hi in self.box)

    def box_is_full(self) -> bool:
        return all(lo == 0 and hi == n - 1 for (lo, hi), n in zip(self.box, self.extent))

    def sample(self, func: Callable, *args) -> "GridFunction":
        """Evaluate ``func(*args, *coords)`` at every node."""
        coords = self.coordinates()
        values = np.broadcast_to(np.asarray(func(*args, *coords)), self.shape)
        return GridFunction(self, values)


def build_grid(
    dim: int,
    spacing: float,
    extent,
    origin=0.0,
    boundary_mode: str = PERIODIC,
    margin: int = 0,
) -> Grid:
    """Construct a grid whose measurement box trims ``margin`` nodes per side.

    Scalar ``extent``/``origin``/``margin`` are replicated over all axes.
    """
    extent = _per_axis(extent, dim, int)
    origin = _per_axis(origin, dim, float)
    margin = _per_axis(margin, dim, int)
    if not spacing > 0:
        raise GridError(f"spacing must be positive, got {spacing}")
    for m, n in zip(margin, extent):
        if m < 0 or 2 * m >= n:
            raise GridError(f"margin {m} incompatible with extent {n}")
    if boundary_mode == ZERO_PADDED and min(margin) < 1:
        raise GridError("zero-padded mode requires an interior measurement box (margin >= 1)")
    box = tuple((m, n - 1 - m) for m, n in zip(margin, extent))
    return Grid(dim, float(spacing), extent, origin, boundary_mode, box)


def periodic_grid(n: int, length: float = 2 * math.pi, dim: int = 1) -> Grid:
    """Torus ``[0, length)^dim`` with ``n`` nodes per axis."""
    return build_grid(dim, length / n, n, 0.0, PERIODIC, 0)


def _per_axis(value, dim, cast):
    if np.ndim(value) == 0:
        return (cast(value),) * dim
    value = tuple(cast(v) for v in value)
    if len(value) != dim:
        raise GridError(f"expected {dim} entries, got {len(value)}")
    return value


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real or complex values over the nodes of a grid.

    ``values`` is a flat, read-only, row-major array; :attr:`array` is the
    same data viewed with the grid shape.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, copy=True)
        if not np.iscomplexobj(values):
            values = values.astype(float)
        values = values.reshape(-1)
        if values.size != self.grid.size:
            raise GridError(f"expected {self.grid.size} values, got {values.size}")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise GridError(f"non-finite value at node {np.unravel_index(bad, self.grid.shape)}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls(grid, np.zeros(grid.size))

    def _check(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise GridError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._check(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._check(other))

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._check(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def max_abs(self, box_only: bool = False) -> float:
        arr = self.array[self.grid.box_slices] if box_only else self.values
        return float(np.max(np.abs(arr))) if arr.size else 0.0


def refine(grid: Grid) -> Grid:
    """Halve the spacing keeping every coarse node as a fine node.

    Periodic axes go from ``N`` to ``2N`` nodes, zero-padded axes from ``N``
    to ``2N - 1``. The measurement box covers the same physical region.
    """
    if grid.periodic:
        extent = tuple(2 * n for n in grid.extent)
    else:
        extent = tuple(2 * n - 1 for n in grid.extent)
    if grid.box_is_full():
        box = tuple((0, n - 1) for n in extent)
    else:
        box = tuple((2 * lo, 2 * hi) for lo, hi in grid.box)
    return Grid(grid.dim, grid.spacing / 2, extent, grid.origin, grid.boundary_mode, box)


def nesting_ratio(fine: Grid, coarse: Grid) -> int:
    """Return ``r`` such that ``coarse`` node ``i`` is ``fine`` node ``r i``.

    Raises :class:`NestingError` unless ``fine`` is obtainable from ``coarse``
    by repeated :func:`refine`.
    """
    if fine.dim != coarse.dim or fine.boundary_mode != coarse.boundary_mode:
        raise NestingError("grids differ in dimension or boundary mode")
    if fine.origin != coarse.origin:
        raise NestingError("grids have different origins")
    ratio = coarse.spacing / fine.spacing
    r = int(round(ratio))
    if r < 1 or r & (r - 1) or fine.spacing * r != coarse.spacing:
        raise NestingError(f"spacing ratio {ratio} is not a power of two")
    for nf, nc in zip(fine.extent, coarse.extent):
        expected = nc * r if fine.periodic else (nc - 1) * r + 1
        if nf != expected:
            raise NestingError(f"fine extent {fine.extent} does not nest coarse extent {coarse.extent}")
    return r


def restrict(fine: GridFunction, coarse: Grid) -> GridFunction:
    """Inject fine values at the coarse nodes (no averaging)."""
    r = nesting_ratio(fine.grid, coarse)
    sl = tuple(slice(None, None, r) for _ in range(coarse.dim))
    values = fine.array[sl]
    if not fine.grid.periodic:
        values = values[tuple(slice(0, n) for n in coarse.extent)]
    return GridFunction(coarse, values)


def shift(f: GridFunction, direction, steps: int = 1) -> GridFunction:
    """Translate: result at node ``x`` is ``f`` at ``x + steps * direction``.

    Periodic grids wrap around; zero-padded grids read zero outside the box.
    """
    return GridFunction(f.grid, shift_array(f.array, f.grid.periodic, direction, steps))


def shift_array(arr: np.ndarray, periodic: bool, direction, steps: int = 1) -> np.ndarray:
    offset = [int(c) * int(steps) for c in direction]
    if len(offset) != arr.ndim:
        raise GridError(f"direction {tuple(direction)} has wrong dimension for {arr.ndim}-D grid")
    if periodic:
        return np.roll(arr, [-o for o in offset], axis=tuple(range(arr.ndim)))
    out = np.zeros_like(arr)
    src, dst = [], []
    for o, n in zip(offset, arr.shape):
        if abs(o) >= n:
            return out
        if o >= 0:
            src.append(slice(o, n))
            dst.append(slice(0, n - o))
        else:
            src.append(slice(0, n + o))
            dst.append(slice(-o, n))
    out[tuple(dst)] = arr[tuple(src)]
    return out
