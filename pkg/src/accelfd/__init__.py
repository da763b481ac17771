"""Finite-difference semidiscretisation of linear parabolic SPDEs with
Richardson acceleration over nested grids."""

from .errors import AccelFDError
from .harness import ExperimentConfig, fit_order, mc_stats, run_convergence
from .integrator import SemidiscreteProblem, solve_path, solve_spectral_exact
from .lattice import Grid, GridFunction, build_grid, periodic_grid, refine, restrict, shift
from .noise import WienerPath, sample_path, value_at
from .richardson import coefficients, extrapolate
from .stencil import ContinuousOperator, OperatorSpec, apply_L, apply_M
from .testbed import PROBLEMS, get_problem

__all__ = [
    "AccelFDError",
    "ContinuousOperator",
    "ExperimentConfig",
    "Grid",
    "GridFunction",
    "OperatorSpec",
    "PROBLEMS",
    "SemidiscreteProblem",
    "WienerPath",
    "apply_L",
    "apply_M",
    "build_grid",
    "coefficients",
    "extrapolate",
    "fit_order",
    "get_problem",
    "mc_stats",
    "periodic_grid",
    "refine",
    "restrict",
    "run_convergence",
    "sample_path",
    "shift",
    "solve_path",
    "solve_spectral_exact",
    "value_at",
]

__version__ = "0.1.0"
