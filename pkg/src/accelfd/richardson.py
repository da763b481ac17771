"""Richardson extrapolation weights and the nested-grid combination.

For grids ``h, h/2, ..., h/2^k`` and an error expansion in powers of
``h^s`` (``s = power_step``), weights ``c_0..c_k`` solve the moment system

    sum_j c_j q^(j m) = delta_{m0},   m = 0..k,   q = 2^-s

so that ``sum_j c_j u^{h/2^j}`` cancels the first ``k`` expansion terms.
The system is solved in exact rational arithmetic and rounded once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import NestingError
from .lattice import GridFunction, nesting_ratio, restrict

MAX_LEVEL = 8


@dataclass(frozen=True)
class ExtrapolationWeights:
    k: int
    power_step: int
    exact: tuple  # Fractions
    weights: tuple  # floats

    def __len__(self):
        return self.k + 1

    def moment(self, m: int) -> float:
        """``sum_j c_j 2^(-j s m)`` evaluated with the floating-point weights."""
        return math.fsum(c * 2.0 ** (-j * self.power_step * m) for j, c in enumerate(self.weights))


def solve_moment_system(k: int, power_step: int) -> list:
    """Exact rational solution of the moment system by Gauss-Jordan elimination."""
    q = Fraction(1, 2**power_step)
    n = k + 1
    rows = [[q ** (j * m) for j in range(n)] + [Fraction(int(m == 0))] for m in range(n)]
    for col in range(n):
        pivot = next(r for r in range(col, n) if rows[r][col] != 0)
        rows[col], rows[pivot] = rows[pivot], rows[col]
        p = rows[col][col]
        rows[col] = [v / p for v in rows[col]]
        for r in range(n):
            if r != col and rows[r][col] != 0:
                f = rows[r][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[col])]
    return [rows[j][n] for j in range(n)]


def coefficients(k: int, power_step: int = 2) -> ExtrapolationWeights:
    """Weights ``c_0..c_k`` for ``k`` extrapolation levels.

    ``c_0`` is rounded from ``1 - sum_{j>=1} c_j`` taken over the already
    rounded weights, so the floating-point weights sum to one.
    """
    if not isinstance(k, (int, np.integer)) or not 0 <= k <= MAX_LEVEL:
        raise ValueError(f"k must be an integer in [0, {MAX_LEVEL}], got {k}")
    if power_step not in (1, 2):
        raise ValueError(f"power_step must be 1 or 2, got {power_step}")
    exact = solve_moment_system(int(k), power_step)
    if sum(exact) != 1:
        raise ArithmeticError("moment system solution does not sum to one")
    tail = [float(c) for c in exact[1:]]
    c0 = float(1 - sum(Fraction(c) for c in tail))
    return ExtrapolationWeights(int(k), power_step, tuple(exact), tuple([c0] + tail))


def extrapolate(solutions: Sequence[GridFunction], weights: ExtrapolationWeights) -> GridFunction:
    """``sum_j c_j u_j`` at the nodes of the coarsest grid.

    ``solutions[j]`` must live on the ``j``-fold refinement of
    ``solutions[0].grid``.
    """
    if len(solutions) != len(weights):
        raise ValueError(f"expected {len(weights)} solutions, got {len(solutions)}")
    coarse = solutions[0].grid
    out = weights.weights[0] * solutions[0].values
    for j, (u, c) in enumerate(zip(solutions[1:], weights.weights[1:]), start=1):
        if nesting_ratio(u.grid, coarse) != 2**j:
            raise NestingError(f"solution {j} is not on the {j}-fold refinement of the coarse grid")
        out = out + c * restrict(u, coarse).values
    return GridFunction(coarse, out)


def format_table(weights: ExtrapolationWeights) -> str:
    lines = [f"# k={weights.k} power_step={weights.power_step}", "j,rational,decimal"]
    for j, (fr, fl) in enumerate(zip(weights.exact, weights.weights)):
        lines.append(f"{j},{fr},{fl!r}")
    return "\n".join(lines)
