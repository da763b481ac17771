"""Canonical 1-D periodic test problems with exact per-path oracles.

Every problem lives on the torus ``[0, 2 pi)``. Oracles take
``(t, path, x)`` and return the exact solution of the continuous equation at
the nodes ``x`` for the given Wiener path. The variable-coefficient problem
has no closed form and is flagged ``surrogate``; its reference is a
much finer grid solution (see :meth:`TestProblem.surrogate_reference`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConfigError
from .integrator import SemidiscreteProblem
from .lattice import Grid, GridFunction, periodic_grid, refine, restrict
from .noise import WienerPath
from .stencil import ContinuousOperator, OperatorSpec, matrix_L, time_independent

LENGTH = 2 * math.pi


@dataclass
class TestProblem:
    """Grid-independent problem template plus its oracle."""

    __test__ = False  # keep pytest from collecting this class

    name: str
    spec: OperatorSpec
    continuous: ContinuousOperator
    initial: Callable
    horizon: float
    oracle: Optional[Callable]
    spectral_exact_ok: bool = False
    degenerate: bool = False
    deterministic: bool = False
    surrogate: bool = False
    notes: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def noise_count(self) -> int:
        return self.spec.noise_count

    def grid(self, n: int) -> Grid:
        return periodic_grid(n, LENGTH)

    def instantiate(self, grid: Grid, horizon: Optional[float] = None) -> SemidiscreteProblem:
        return SemidiscreteProblem(self.spec, grid, grid.sample(self.initial), horizon or self.horizon)

    def exact(self, grid: Grid, path: WienerPath, t: Optional[float] = None) -> GridFunction:
        """Oracle sampled on ``grid`` at time ``t`` (default: the path horizon)."""
        t = path.horizon if t is None else t
        if self.surrogate:
            raise ValueError(f"{self.name} has no exact oracle; use surrogate_reference")
        return GridFunction(grid, self.oracle(t, path, *grid.coordinates()))

    def surrogate_reference(self, grid: Grid, levels: int, horizon: Optional[float] = None) -> GridFunction:
        """Semidiscrete solution on ``grid`` refined ``levels`` times, injected back.

        Only for deterministic problems with time-independent coefficients:
        the fine system is integrated exactly with the action of the matrix
        exponential, so the reference has no time error.
        """
        if not (self.deterministic and self.spec.is_time_independent() and not self.spec.has_free_terms()):
            raise ValueError("surrogate reference needs a deterministic, time-independent problem")
        T = horizon or self.horizon
        key = (grid, levels, T)
        if key not in self._cache:
            fine = grid
            for _ in range(levels):
                fine = refine(fine)
            A = matrix_L(self.spec, 0.0, fine).tocsc()
            u0 = fine.sample(self.initial).values
            uT = spla.expm_multiply(A * T, u0)
            self._cache[key] = restrict(GridFunction(fine, uT), grid)
        return self._cache[key]


def _path_value(path: WienerPath, t: float, rho: int = 0) -> float:
    return float(path.value_at(t)[rho])


def deterministic_heat_1d(horizon: float = 0.5) -> TestProblem:
    """``u_t = u_xx``, ``u0 = sin x + sin 3x``."""
    spec = OperatorSpec(directions=[(1,)], a={(1,): 1.0})
    return TestProblem(
        name="deterministic_heat_1d",
        spec=spec,
        continuous=ContinuousOperator(a_matrix=[[1.0]]),
        initial=lambda x: np.sin(x) + np.sin(3 * x),
        horizon=horizon,
        oracle=lambda t, path, x: np.exp(-t) * np.sin(x) + np.exp(-9 * t) * np.sin(3 * x),
        spectral_exact_ok=True,
        deterministic=True,
    )


def transport_diffusion_1d(horizon: float = 1.0) -> TestProblem:
    """``du = u_xx / 2 dt + u_x dW``; the exact solution is ``sin(x + W_t)``.

    Degenerate: ``a - sigma^2 / 2 = 0``, so the noise exactly balances the
    diffusion and the solution is a random translation without decay.
    """
    spec = OperatorSpec(
        directions=[(1,)],
        a={(1,): 0.5},
        noise_count=1,
        sigma={((1,), 0): 1.0},
    )
    return TestProblem(
        name="transport_diffusion_1d",
        spec=spec,
        continuous=ContinuousOperator(a_matrix=[[0.5]], sigma_matrix=[[1.0]], nu_vector=[0.0], noise_count=1),
        initial=np.sin,
        horizon=horizon,
        oracle=lambda t, path, x: np.sin(x + _path_value(path, t)),
        spectral_exact_ok=True,
        degenerate=True,
        notes="degenerate stochastic parabolicity (a - sigma^2/2 = 0)",
    )


def additive_noise_manufactured_1d(horizon: float = 1.0) -> TestProblem:
    """Manufactured target ``u = sin(x) (1 + W_t)`` for ``du = (u_xx + f) dt + g dW``.

    ``g = sin x`` and the path-dependent drift ``f = sin(x) (1 + W_t)``
    cancels ``u_xx``, leaving ``du = sin x dW``.
    """
    spec = OperatorSpec(
        directions=[(1,)],
        a={(1,): 1.0},
        noise_count=1,
        free_drift=lambda t, x, w: np.sin(x) * (1.0 + w[0]),
        free_noise={0: lambda t, x, w: np.sin(x)},
    )
    return TestProblem(
        name="additive_noise_manufactured_1d",
        spec=spec,
        continuous=ContinuousOperator(a_matrix=[[1.0]], sigma_matrix=[[0.0]], nu_vector=[0.0], noise_count=1),
        initial=np.sin,
        horizon=horizon,
        oracle=lambda t, path, x: np.sin(x) * (1.0 + _path_value(path, t)),
    )


def variable_coefficient_1d(horizon: float = 0.5) -> TestProblem:
    """``u_t = (1 + sin(x)/2) u_xx``, ``u0 = sin x``; surrogate reference only."""
    coef = time_independent(lambda t, x: 1.0 + 0.5 * np.sin(x))
    spec = OperatorSpec(directions=[(1,)], a={(1,): coef})
    return TestProblem(
        name="variable_coefficient_1d",
        spec=spec,
        continuous=ContinuousOperator(a_matrix=lambda t, x: (1.0 + 0.5 * np.sin(x))[None, None]),
        initial=np.sin,
        horizon=horizon,
        oracle=None,
        deterministic=True,
        surrogate=True,
        notes="surrogate oracle: fine-grid semidiscrete solution",
    )


def advection_diffusion_1d(horizon: float = 0.5) -> TestProblem:
    """``u_t = u_xx + u_x`` with one-sided (forward) first differences.

    Exact solution ``exp(-t) sin(x + t)``. The forward difference makes the
    error expansion contain every power of ``h``.
    """
    spec = OperatorSpec(directions=[(1,)], a={(1,): 1.0}, b={(1,): 1.0}, symmetric=False)
    return TestProblem(
        name="advection_diffusion_1d",
        spec=spec,
        continuous=ContinuousOperator(a_matrix=[[1.0]], b_vector=[1.0]),
        initial=np.sin,
        horizon=horizon,
        oracle=lambda t, path, x: np.exp(-t) * np.sin(x + t),
        spectral_exact_ok=True,
        deterministic=True,
    )


def zero_operator_1d(horizon: float = 1.0) -> TestProblem:
    """All coefficients zero: the solution is the initial data forever."""
    spec = OperatorSpec(directions=[(1,)])
    return TestProblem(
        name="zero_operator_1d",
        spec=spec,
        continuous=ContinuousOperator(a_matrix=[[0.0]]),
        initial=np.sin,
        horizon=horizon,
        oracle=lambda t, path, x: np.sin(x),
        spectral_exact_ok=True,
        deterministic=True,
    )


PROBLEMS = {
    f.__name__: f
    for f in (
        deterministic_heat_1d,
        transport_diffusion_1d,
        additive_noise_manufactured_1d,
        variable_coefficient_1d,
        advection_diffusion_1d,
        zero_operator_1d,
    )
}


def get_problem(name: str, horizon: Optional[float] = None) -> TestProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; available: {', '.join(sorted(PROBLEMS))}") from None
    return factory() if horizon is None else factory(horizon)
