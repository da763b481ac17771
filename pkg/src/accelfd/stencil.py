"""Finite differences along lattice directions and the discrete operators.

The discrete drift and diffusion operators are written in directional form::

    L_h u = sum_l a_l D2_l u + sum_l b_l d_l u + c u
    M_h^r u = sum_l s_{l,r} d_l u + nu_r u

where ``D2_l`` is the symmetric second difference along the integer vector
``l`` and ``d_l`` is the central first difference (``symmetric=True``) or the
forward difference (``symmetric=False``). With ``sum_l a_l l l^T = a`` and
``sum_l b_l l = b`` this is consistent with ``a^{ij} D_i D_j + b^i D_i + c``.
Only the symmetric choice gives an error expansion in even powers of ``h``.

Coefficients are plain numbers (constant fields) or callables
``coef(t, *coords)``. Free terms additionally receive the current Wiener
value: ``term(t, *coords, w)`` with ``w`` the length-``d1`` vector ``W_t``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from numbers import Number
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog, nnls

from .errors import CoefficientError, DecompositionError, GridError
from .lattice import Grid, GridFunction, shift_array


def time_independent(func: Callable) -> Callable:
    """Mark a coefficient callable as constant in time (allows caching)."""
    func.time_independent = True
    return func


def is_constant(coef) -> bool:
    return coef is None or isinstance(coef, Number)


def is_time_independent(coef) -> bool:
    return is_constant(coef) or getattr(coef, "time_independent", False)


def as_direction(lam, dim: Optional[int] = None) -> tuple:
    lam = (int(lam),) if np.ndim(lam) == 0 else tuple(int(c) for c in lam)
    if dim is not None and len(lam) != dim:
        raise GridError(f"direction {lam} has wrong dimension for {dim}-D grid")
    if not any(lam):
        raise GridError("direction must be a nonzero integer vector")
    return lam


def evaluate(coef, t: float, grid: Grid, *extra, name: str = "coefficient"):
    """Sample a coefficient on ``grid``; scalars pass through unchanged."""
    if coef is None:
        return 0.0
    if isinstance(coef, Number):
        if not np.isfinite(coef):
            raise CoefficientError(f"{name} is not finite: {coef}")
        return coef
    values = np.broadcast_to(np.asarray(coef(t, *grid.coordinates(), *extra)), grid.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise CoefficientError(f"{name} not finite at node {node} (x={grid.node(node)}, t={t})")
    return values


@dataclass
class OperatorSpec:
    """Direction set and coefficient fields of ``L_h`` and ``M_h^r``.

    ``a``, ``b`` map a direction to a coefficient; ``sigma`` maps
    ``(direction, r)`` pairs; ``nu`` and ``free_noise`` map a noise index.
    Directions are integer vectors in units of the grid step.

    ``symmetric=True`` uses central first differences. Together with the
    symmetric second differences, smooth coefficients and periodic or
    compactly supported data, the error expansion then carries only even
    powers of ``h`` (extrapolate with ``power_step=2``). With forward
    differences every power appears (``power_step=1``).
    """

    directions: tuple
    a: dict = field(default_factory=dict)
    b: dict = field(default_factory=dict)
    c: object = 0.0
    noise_count: int = 0
    sigma: dict = field(default_factory=dict)
    nu: dict = field(default_factory=dict)
    free_drift: Optional[Callable] = None
    free_noise: dict = field(default_factory=dict)
    symmetric: bool = True

    def __post_init__(self):
        self.directions = tuple(as_direction(l) for l in self.directions)
        dims = {len(l) for l in self.directions}
        if len(dims) > 1:
            raise GridError("directions of mixed dimension")
        self.a = {as_direction(l): v for l, v in self.a.items()}
        self.b = {as_direction(l): v for l, v in self.b.items()}
        self.sigma = {(as_direction(l), int(r)): v for (l, r), v in self.sigma.items()}
        self.nu = {int(r): v for r, v in self.nu.items()}
        self.free_noise = {int(r): v for r, v in self.free_noise.items()}
        known = set(self.directions)
        used = set(self.a) | set(self.b) | {l for l, _ in self.sigma}
        if not used <= known:
            raise GridError(f"directions {sorted(used - known)} not in the direction set")
        rhos = {r for _, r in self.sigma} | set(self.nu) | set(self.free_noise)
        if any(r < 0 or r >= self.noise_count for r in rhos):
            raise GridError(f"noise index outside [0, {self.noise_count})")

    @property
    def dim(self) -> int:
        return len(self.directions[0]) if self.directions else 1

    @property
    def radius(self) -> int:
        """Largest per-axis reach of the stencil in grid steps."""
        return max((max(abs(c) for c in l) for l in self.directions), default=0)

    def coefficients(self):
        yield from self.a.values()
        yield from self.b.values()
        yield self.c
        yield from self.sigma.values()
        yield from self.nu.values()

    def has_constant_coefficients(self) -> bool:
        return all(is_constant(c) for c in self.coefficients())

    def is_time_independent(self) -> bool:
        return all(is_time_independent(c) for c in self.coefficients())

    def has_free_terms(self) -> bool:
        return self.free_drift is not None or any(g is not None for g in self.free_noise.values())

    def is_deterministic(self) -> bool:
        no_sigma = all(is_constant(v) and not v for v in self.sigma.values())
        no_nu = all(is_constant(v) and not v for v in self.nu.values())
        return self.noise_count == 0 or (no_sigma and no_nu and not self.free_noise)

    def monotonicity_violations(self, grid: Grid, t: float = 0.0) -> list:
        """Nodes where some ``a_l`` is negative, as ``(direction, node, value)``."""
        out = []
        for lam, coef in self.a.items():
            vals = np.broadcast_to(evaluate(coef, t, grid), grid.shape)
            for idx in np.argwhere(vals < 0):
                idx = tuple(int(i) for i in idx)
                out.append((lam, idx, float(vals[idx])))
        return out


# -- difference operators -------------------------------------------------


def _h(f: GridFunction, h):
    return f.grid.spacing if h is None else h


def diff_forward(f: GridFunction, lam, h=None) -> GridFunction:
    lam = as_direction(lam, f.grid.dim)
    up = shift_array(f.array, f.grid.periodic, lam, 1)
    return GridFunction(f.grid, (up - f.array) / _h(f, h))


def diff_backward(f: GridFunction, lam, h=None) -> GridFunction:
    lam = as_direction(lam, f.grid.dim)
    down = shift_array(f.array, f.grid.periodic, lam, -1)
    return GridFunction(f.grid, (f.array - down) / _h(f, h))


def diff_central(f: GridFunction, lam, h=None) -> GridFunction:
    lam = as_direction(lam, f.grid.dim)
    up = shift_array(f.array, f.grid.periodic, lam, 1)
    down = shift_array(f.array, f.grid.periodic, lam, -1)
    return GridFunction(f.grid, (up - down) / (2 * _h(f, h)))


def diff_second(f: GridFunction, lam, h=None) -> GridFunction:
    lam = as_direction(lam, f.grid.dim)
    up = shift_array(f.array, f.grid.periodic, lam, 1)
    down = shift_array(f.array, f.grid.periodic, lam, -1)
    return GridFunction(f.grid, (up - 2 * f.array + down) / _h(f, h) ** 2)


def _first(spec: OperatorSpec):
    return diff_central if spec.symmetric else diff_forward


def apply_L(spec: OperatorSpec, t: float, u: GridFunction) -> GridFunction:
    """Discrete drift operator ``L_h`` applied to ``u`` at time ``t``."""
    grid = u.grid
    first = _first(spec)
    out = np.zeros(grid.shape, dtype=u.values.dtype)
    for lam, coef in spec.a.items():
        out = out + evaluate(coef, t, grid, name=f"a{lam}") * diff_second(u, lam).array
    for lam, coef in spec.b.items():
        out = out + evaluate(coef, t, grid, name=f"b{lam}") * first(u, lam).array
    out = out + evaluate(spec.c, t, grid, name="c") * u.array
    return GridFunction(grid, out)


def apply_M(spec: OperatorSpec, rho: int, t: float, u: GridFunction) -> GridFunction:
    """Discrete noise operator ``M_h^rho`` applied to ``u`` at time ``t``."""
    if not 0 <= rho < spec.noise_count:
        raise IndexError(f"noise index {rho} outside [0, {spec.noise_count})")
    grid = u.grid
    first = _first(spec)
    out = np.zeros(grid.shape, dtype=u.values.dtype)
    for (lam, r), coef in spec.sigma.items():
        if r == rho:
            out = out + evaluate(coef, t, grid, name=f"sigma{lam},{r}") * first(u, lam).array
    out = out + evaluate(spec.nu.get(rho), t, grid, name=f"nu{rho}") * u.array
    return GridFunction(grid, out)


# -- sparse assembly ------------------------------------------------------


def shift_matrix(grid: Grid, lam, steps: int = 1) -> sp.csr_matrix:
    """Sparse matrix ``S`` with ``(S u)(x) = u(x + steps * lam)``."""
    idx = np.arange(grid.size).reshape(grid.shape)
    cols = shift_array(idx, grid.periodic, lam, steps).reshape(-1)
    rows = np.arange(grid.size)
    if not grid.periodic:
        valid = shift_array(np.ones(grid.shape, bool), False, lam, steps).reshape(-1)
        rows, cols = rows[valid], cols[valid]
    data = np.ones(rows.size)
    return sp.csr_matrix((data, (rows, cols)), shape=(grid.size, grid.size))


def _diag(values, grid: Grid):
    return sp.diags(np.broadcast_to(values, grid.shape).reshape(-1))


def _first_matrix(spec: OperatorSpec, grid: Grid, lam):
    h = grid.spacing
    if spec.symmetric:
        return (shift_matrix(grid, lam, 1) - shift_matrix(grid, lam, -1)) / (2 * h)
    return (shift_matrix(grid, lam, 1) - sp.identity(grid.size)) / h


def matrix_L(spec: OperatorSpec, t: float, grid: Grid) -> sp.csr_matrix:
    """Sparse matrix of ``L_h`` on ``grid`` at time ``t``."""
    h = grid.spacing
    eye = sp.identity(grid.size, format="csr")
    mat = _diag(evaluate(spec.c, t, grid, name="c"), grid)
    for lam, coef in spec.a.items():
        second = (shift_matrix(grid, lam, 1) - 2 * eye + shift_matrix(grid, lam, -1)) / h**2
        mat = mat + _diag(evaluate(coef, t, grid, name=f"a{lam}"), grid) @ second
    for lam, coef in spec.b.items():
        mat = mat + _diag(evaluate(coef, t, grid, name=f"b{lam}"), grid) @ _first_matrix(spec, grid, lam)
    return sp.csr_matrix(mat)


def matrix_M(spec: OperatorSpec, rho: int, t: float, grid: Grid) -> sp.csr_matrix:
    mat = _diag(evaluate(spec.nu.get(rho), t, grid, name=f"nu{rho}"), grid)
    for (lam, r), coef in spec.sigma.items():
        if r == rho:
            mat = mat + _diag(evaluate(coef, t, grid), grid) @ _first_matrix(spec, grid, lam)
    return sp.csr_matrix(mat)


# -- Fourier symbols (periodic grids, constant coefficients) --------------


def mode_angles(grid: Grid, lam) -> np.ndarray:
    """``theta = h * kappa . lam`` for every DFT mode, in ``fftn`` order."""
    if not grid.periodic:
        raise GridError("Fourier symbols need a periodic grid")
    kappas = [2 * np.pi * np.fft.fftfreq(n, d=grid.spacing) for n in grid.extent]
    mesh = np.meshgrid(*kappas, indexing="ij")
    return grid.spacing * sum(k * c for k, c in zip(mesh, lam))


def _first_symbol(spec: OperatorSpec, grid: Grid, lam):
    theta = mode_angles(grid, lam)
    if spec.symmetric:
        return 1j * np.sin(theta) / grid.spacing
    # exp(i theta) - 1 without cancellation at small theta
    return (-2 * np.sin(theta / 2) ** 2 + 1j * np.sin(theta)) / grid.spacing


def _require_constant(spec: OperatorSpec):
    if not spec.has_constant_coefficients():
        raise CoefficientError("Fourier symbols require constant coefficients")


def symbol_L(spec: OperatorSpec, grid: Grid) -> np.ndarray:
    """Eigenvalue of ``L_h`` on each discrete Fourier mode."""
    _require_constant(spec)
    h = grid.spacing
    out = np.full(grid.shape, complex(spec.c or 0.0))
    for lam, coef in spec.a.items():
        # 2 cos(theta) - 2, written to avoid cancellation at small theta
        out = out - coef * 4 * np.sin(mode_angles(grid, lam) / 2) ** 2 / h**2
    for lam, coef in spec.b.items():
        out = out + coef * _first_symbol(spec, grid, lam)
    return out


def symbol_M(spec: OperatorSpec, rho: int, grid: Grid) -> np.ndarray:
    _require_constant(spec)
    out = np.full(grid.shape, complex(spec.nu.get(rho) or 0.0))
    for (lam, r), coef in spec.sigma.items():
        if r == rho:
            out = out + coef * _first_symbol(spec, grid, lam)
    return out


# -- continuous operator and consistency ----------------------------------


@dataclass
class ContinuousOperator:
    """``L = a^{ij} D_i D_j + b^i D_i + c`` and ``M^r = s^{ir} D_i + nu^r``.

    Each field is a constant array or a callable ``(t, *coords)`` returning an
    array whose leading axes are the matrix/vector axes followed by the grid
    axes.
    """

    a_matrix: object
    b_vector: object = None
    c_scalar: object = 0.0
    sigma_matrix: object = None
    nu_vector: object = None
    noise_count: int = 0

    def sample(self, t: float, grid: Grid) -> dict:
        d, d1 = grid.dim, self.noise_count

        def get(value, lead):
            if value is None:
                return np.zeros(lead + grid.shape)
            if callable(value):
                value = value(t, *grid.coordinates())
            arr = np.asarray(value, dtype=float)
            if arr.shape == lead:
                arr = arr.reshape(lead + (1,) * d)
            return np.broadcast_to(arr, lead + grid.shape)

        a = get(self.a_matrix, (d, d))
        if not np.allclose(a, np.swapaxes(a, 0, 1), rtol=0, atol=1e-14):
            raise CoefficientError("diffusion matrix is not symmetric")
        return {
            "a": a,
            "b": get(self.b_vector, (d,)),
            "c": get(self.c_scalar, ()),
            "sigma": get(self.sigma_matrix, (d, d1)),
            "nu": get(self.nu_vector, (d1,)),
            "noise_count": d1,
        }


@dataclass(frozen=True)
class ParabolicityReport:
    min_eigenvalue: float
    status: str  # "uniform", "degenerate" or "violated"


def parabolicity(cont: ContinuousOperator, grid: Grid, t: float = 0.0, tol: float = 1e-12) -> ParabolicityReport:
    """Smallest eigenvalue of ``a - sigma sigma^T / 2`` over sampled nodes."""
    s = cont.sample(t, grid)
    a = np.moveaxis(s["a"].reshape(grid.dim, grid.dim, -1), -1, 0)
    coerc = a
    if s["noise_count"]:
        sig = np.moveaxis(s["sigma"].reshape(grid.dim, s["noise_count"], -1), -1, 0)
        coerc = a - 0.5 * sig @ np.swapaxes(sig, 1, 2)
    lam_min = float(np.min(np.linalg.eigvalsh(coerc)))
    if lam_min > tol:
        status = "uniform"
    elif lam_min >= -tol:
        status = "degenerate"
    else:
        status = "violated"
    return ParabolicityReport(lam_min, status)


def _monomial(coords, exps):
    out = np.ones_like(coords[0])
    for x, e in zip(coords, exps):
        out = out * x**e
    return out


def _dmonomial(coords, exps, axis):
    if exps[axis] == 0:
        return np.zeros_like(coords[0])
    lowered = list(exps)
    lowered[axis] -= 1
    return exps[axis] * _monomial(coords, lowered)


def _interior(grid: Grid, radius: int) -> tuple:
    if any(n <= 2 * radius for n in grid.extent):
        raise GridError("grid too small for the stencil")
    return tuple(slice(radius, n - radius) for n in grid.extent)


@dataclass(frozen=True)
class Residual:
    operator: str  # "L" or "M<rho>"
    exponents: tuple
    max_abs: float
    max_scaled: float  # max |residual| / max(1, |x|^2)


@dataclass(frozen=True)
class ConsistencyReport:
    degree: int
    residuals: tuple

    @property
    def max_scaled(self) -> float:
        return max((r.max_scaled for r in self.residuals), default=0.0)


def monomial_residual(
    spec: OperatorSpec,
    cont: ContinuousOperator,
    grid: Grid,
    exponents,
    operator: str = "L",
    t: float = 0.0,
) -> Residual:
    """Compare the discrete and exact operator on ``x^exponents`` at interior nodes."""
    exponents = tuple(int(e) for e in exponents)
    coords = grid.coordinates()
    u = GridFunction(grid, _monomial(coords, exponents))
    s = cont.sample(t, grid)
    d = grid.dim
    if operator == "L":
        discrete = apply_L(spec, t, u).array
        exact = s["c"] * u.array
        for i in range(d):
            di = _dmonomial(coords, exponents, i)
            exact = exact + s["b"][i] * di
            for j in range(d):
                lowered = list(exponents)
                if lowered[i] == 0:
                    continue
                factor = lowered[i]
                lowered[i] -= 1
                exact = exact + s["a"][i, j] * factor * _dmonomial(coords, lowered, j)
    elif operator.startswith("M"):
        rho = int(operator[1:])
        discrete = apply_M(spec, rho, t, u).array
        exact = s["nu"][rho] * u.array
        for i in range(d):
            exact = exact + s["sigma"][i, rho] * _dmonomial(coords, exponents, i)
    else:
        raise ValueError(f"unknown operator {operator!r}")
    inner = _interior(grid, spec.radius)
    res = np.abs(discrete - exact)[inner]
    r2 = sum(x**2 for x in coords)[inner]
    return Residual(operator, exponents, float(res.max()), float((res / np.maximum(1.0, r2)).max()))


def consistency_check(
    spec: OperatorSpec,
    cont: ContinuousOperator,
    grid: Grid,
    degree: int = 2,
    t: float = 0.0,
) -> ConsistencyReport:
    """Residuals of ``L_h``/``M_h^r`` against ``L``/``M^r`` on all monomials up to ``degree``."""
    if degree not in (1, 2):
        raise ValueError("degree must be 1 or 2")
    ops = ["L"] + [f"M{r}" for r in range(spec.noise_count)]
    residuals = []
    for total in range(degree + 1):
        for exps in itertools.product(range(total + 1), repeat=grid.dim):
            if sum(exps) != total:
                continue
            for op in ops:
                residuals.append(monomial_residual(spec, cont, grid, exps, op, t))
    return ConsistencyReport(degree, tuple(residuals))


# -- diffusion matrix decomposition ---------------------------------------


def decompose_diffusion(a_matrix, directions, rtol: float = 1e-12) -> dict:
    """Nonnegative ``a_l`` with ``sum_l a_l l l^T = a``.

    Among feasible weightings the one minimising ``sum_l a_l |l|^4`` is
    chosen, which favours short stencil directions.
    """
    a = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    d = a.shape[0]
    dirs = [as_direction(l, d) for l in directions]
    iu = np.triu_indices(d)
    A = np.array([np.outer(l, l)[iu] for l in dirs], dtype=float).T
    rhs = a[iu]
    scale = max(1.0, float(np.abs(rhs).max()))
    cost = np.array([float(np.dot(l, l)) ** 2 for l in dirs])
    lp = linprog(cost, A_eq=A, b_eq=rhs, bounds=[(0, None)] * len(dirs), method="highs")
    if lp.status != 0:
        w, res = nnls(A, rhs)
        raise DecompositionError(
            f"no nonnegative decomposition over {len(dirs)} directions (best residual {res:.3e})",
            dict(zip(dirs, w)),
            res,
        )
    w = np.where(lp.x > 1e-12 * scale, lp.x, 0.0)
    support = np.flatnonzero(w)
    if support.size:
        sol, *_ = np.linalg.lstsq(A[:, support], rhs, rcond=None)
        if np.all(sol >= 0):
            w = np.zeros(len(dirs))
            w[support] = sol
    residual = float(np.abs(A @ w - rhs).max())
    if residual > rtol * scale * 10:
        raise DecompositionError(f"decomposition residual {residual:.3e} too large", dict(zip(dirs, w)), residual)
    return {l: float(v) for l, v in zip(dirs, w)}


def continuous_from_spec(spec: OperatorSpec) -> ContinuousOperator:
    """Continuous operator implied by constant directional coefficients."""
    _require_constant(spec)
    d = spec.dim
    a = np.zeros((d, d))
    for lam, coef in spec.a.items():
        a += coef * np.outer(lam, lam)
    b = np.zeros(d)
    for lam, coef in spec.b.items():
        b += coef * np.asarray(lam)
    sig = np.zeros((d, spec.noise_count))
    for (lam, r), coef in spec.sigma.items():
        sig[:, r] += coef * np.asarray(lam)
    nu = np.array([spec.nu.get(r) or 0.0 for r in range(spec.noise_count)])
    return ContinuousOperator(a, b, spec.c or 0.0, sig, nu, spec.noise_count)
