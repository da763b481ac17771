"""Nested-grid Monte Carlo convergence experiments.

For base resolutions ``h_r = h_0 / 2^r`` (``r = 0..R-1``) and paths
``p = 0..P-1`` the harness solves on ``h_r, h_r/2, ..., h_r/2^k`` with one
shared Wiener path, extrapolates, and measures the sup-norm error over the
measurement box. Errors are aggregated as the root mean square over paths
(an ``L^2(Omega; l^inf)`` strong error) and orders are fitted between rows.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import AccelFDError, ConfigError
from .integrator import PathSolution, SemidiscreteProblem, solve_path, spectral_eligible
from .lattice import GridFunction, refine
from .noise import WienerPath, sample_path, uniform_time_grid
from .richardson import ExtrapolationWeights, coefficients, extrapolate
from .testbed import TestProblem, get_problem

log = logging.getLogger(__name__)

CSV_COLUMNS = ("h", "k", "power_step", "paths", "rms_sup_error", "q10", "q50", "q90", "local_order", "slope")
MAX_TIME_STEPS = 10**6
MAX_NODES = 2**22
ERROR_METRIC = "per-path sup over measurement-box nodes, then root mean square over paths"


@dataclass
class ExperimentConfig:
    problem: str
    n_coarse: int = 16
    refinements: int = 4
    k: int = 0
    power_step: int = 2
    scheme: str = "auto"
    paths: int = 1
    seed: int = 0
    horizon: Optional[float] = None
    time_steps: object = "auto"
    workers: int = 1
    output_dir: str = "."
    name: str = "convergence"

    def validate(self):
        if self.refinements < 2:
            raise ConfigError("refinements must be at least 2 to fit an order")
        if self.paths < 1:
            raise ConfigError("paths must be at least 1")
        if self.n_coarse < 2:
            raise ConfigError("n_coarse must be at least 2")
        if self.power_step not in (1, 2):
            raise ConfigError("power_step must be 1 or 2")
        if self.scheme not in ("auto", "spectral", "explicit", "drift_implicit"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.time_steps != "auto" and (not isinstance(self.time_steps, int) or self.time_steps < 1):
            raise ConfigError("time_steps must be 'auto' or a positive integer")
        if self.n_coarse * 2 ** (self.refinements - 1 + self.k) > MAX_NODES:
            raise ConfigError("finest grid exceeds the memory guard")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        return self

    @property
    def target_order(self) -> int:
        return self.power_step * (self.k + 1)


@dataclass(frozen=True)
class OrderFit:
    local: tuple
    slope: float
    exact: bool = False


def fit_order(errors, h=None) -> OrderFit:
    """Local orders between consecutive errors and the least-squares slope.

    Without ``h`` the spacings are assumed to halve, i.e. local orders are
    ``log2(e_r / e_{r+1})``.
    """
    e = np.asarray(errors, dtype=float)
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be finite and nonnegative")
    if np.all(e == 0):
        return OrderFit((), 0.0, exact=True)
    if np.any(e == 0):
        raise ValueError("cannot fit an order through a zero error")
    hs = 2.0 ** -np.arange(e.size) if h is None else np.asarray(h, dtype=float)
    local = tuple(float(np.log(e[i] / e[i + 1]) / np.log(hs[i] / hs[i + 1])) for i in range(e.size - 1))
    slope = float(np.polyfit(np.log(hs), np.log(e), 1)[0]) if e.size > 1 else float("nan")
    return OrderFit(local, slope)


@dataclass(frozen=True)
class McSummary:
    paths: int
    rms: float
    mean: float
    median: float
    q10: float
    q90: float
    rms_stderr: float


def mc_stats(per_path_errors) -> McSummary:
    """Summary of per-path errors; the rms standard error uses the delta method."""
    e = np.asarray(per_path_errors, dtype=float)
    n = e.size
    if n == 0:
        raise ValueError("no path errors")
    sq = e**2
    rms = math.sqrt(math.fsum(sq) / n)
    if rms == 0:
        se = 0.0
    elif n == 1:
        se = float("nan")
    else:
        se = float(np.std(sq, ddof=1) / math.sqrt(n) / (2 * rms))
    q10, q50, q90 = (float(v) for v in np.quantile(e, [0.1, 0.5, 0.9]))
    return McSummary(n, rms, float(np.mean(e)), q50, q10, q90, se)


@dataclass(frozen=True)
class Row:
    h: float
    rms_sup_error: float
    q10: float
    q50: float
    q90: float
    local_order: Optional[float]
    slope: Optional[float]


@dataclass
class ConvergenceTable:
    k: int
    power_step: int
    paths: int
    rows: list
    per_path_errors: np.ndarray
    digests: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.rms_sup_error for r in self.rows])

    @property
    def fit(self) -> OrderFit:
        return fit_order(self.errors, [r.h for r in self.rows])

    def noise_shared(self) -> bool:
        """True when every cell's nested solves consumed identical increments."""
        return all(len(set(d)) == 1 for d in self.digests.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow([
                _num(r.h), self.k, self.power_step, self.paths, _num(r.rms_sup_error),
                _num(r.q10), _num(r.q50), _num(r.q90), _num(r.local_order), _num(r.slope),
            ])
        return buf.getvalue()

    def plot_data(self) -> str:
        lines = ["log2_h,log2_error"]
        for r in self.rows:
            if r.rms_sup_error > 0:
                lines.append(f"{_num(math.log2(r.h))},{_num(math.log2(r.rms_sup_error))}")
        return "\n".join(lines) + "\n"

    def metadata_text(self) -> str:
        return json.dumps(self.metadata, indent=2, sort_keys=True) + "\n"


def _num(x) -> str:
    # repr is locale independent and round-trips exactly
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def _grids(problem: TestProblem, n: int, k: int):
    grids = [problem.grid(n)]
    for _ in range(k):
        grids.append(refine(grids[-1]))
    return grids


def resolve_scheme(config: ExperimentConfig, problem: TestProblem) -> str:
    if config.scheme != "auto":
        return config.scheme
    probe = problem.instantiate(problem.grid(config.n_coarse), config.horizon)
    return "spectral" if spectral_eligible(probe) else "drift_implicit"


def time_grid_for(config: ExperimentConfig, problem: TestProblem, scheme: str):
    """Shared time grid of the whole run, plus a note on how it was chosen."""
    T = config.horizon or problem.horizon
    if scheme == "spectral":
        return uniform_time_grid(T, 1), "spectral: exact in time, single interval"
    if config.time_steps != "auto":
        return uniform_time_grid(T, int(config.time_steps)), f"fixed: {config.time_steps} steps"
    h_fine = problem.grid(config.n_coarse).spacing / 2 ** (config.refinements - 1 + config.k)
    tau = min(h_fine**2, h_fine ** (config.target_order + 1))
    steps = math.ceil(T / tau)
    note = f"auto: tau=min(h^2, h^{config.target_order + 1}) with h={h_fine!r}"
    if steps > MAX_TIME_STEPS:
        steps = MAX_TIME_STEPS
        note += f", capped at {MAX_TIME_STEPS} steps"
    log.info("time grid %s -> %d steps", note, steps)
    return uniform_time_grid(T, steps), note + f" -> {steps} steps"


Solver = Callable[[SemidiscreteProblem, WienerPath], object]


def _as_solution(result) -> PathSolution:
    if isinstance(result, PathSolution):
        return result
    if isinstance(result, GridFunction):
        return PathSolution(result, 0, result.max_abs())
    raise TypeError(f"solver returned {type(result).__name__}")


def run_convergence(
    config: ExperimentConfig,
    solver: Optional[Solver] = None,
    problem: Optional[TestProblem] = None,
) -> ConvergenceTable:
    """Run the nested-grid experiment described by ``config``.

    ``solver(problem, path)`` replaces the built-in integrator; it may return
    a :class:`PathSolution` or a bare :class:`GridFunction`. ``problem``
    overrides lookup of ``config.problem`` by name.
    """
    config.validate()
    problem = problem or get_problem(config.problem)
    weights = coefficients(config.k, config.power_step)
    scheme = resolve_scheme(config, problem)
    tgrid, time_note = time_grid_for(config, problem, scheme)
    T = float(tgrid[-1])
    if solver is None:
        def solver(p, path):
            return solve_path(p, scheme, path)

    R, P = config.refinements, config.paths
    errors = np.zeros((R, P))
    digests = {}
    surrogate_checks = []
    for r in range(R):
        grids = _grids(problem, config.n_coarse * 2**r, config.k)
        problems = [problem.instantiate(g, T) for g in grids]
        reference = None
        if problem.surrogate:
            reference = problem.surrogate_reference(grids[0], config.k + 2, T)
            finer = problem.surrogate_reference(grids[0], config.k + 3, T)
            surrogate_checks.append((r, float(np.max(np.abs((reference - finer).array[grids[0].box_slices])))))

        def cell(p, grids=grids, problems=problems, reference=reference, r=r):
            path = sample_path(config.seed, p, tgrid, problem.noise_count)
            sols, used = [], []
            for sp_ in problems:
                try:
                    sol = _as_solution(solver(sp_, path))
                except AccelFDError as exc:
                    raise type(exc)(f"[resolution {r}, path {p}] {exc}") from exc
                sols.append(sol.terminal)
                used.append(sol.noise_digest or path.digest())
            u = extrapolate(sols, weights)
            exact = reference if reference is not None else problem.exact(grids[0], path, T)
            err = (u - exact).max_abs(box_only=True)
            return err, tuple(used)

        if config.workers > 1:
            with ThreadPoolExecutor(config.workers) as pool:
                results = list(pool.map(cell, range(P)))
        else:
            results = [cell(p) for p in range(P)]
        for p, (err, used) in enumerate(results):
            errors[r, p] = err
            digests[(r, p)] = used

    for r, diff in surrogate_checks:
        if not diff < float(np.sqrt(np.mean(errors[r] ** 2))) / 10:
            raise AccelFDError(
                f"surrogate reference not converged at resolution {r}: "
                f"refinement difference {diff:.3e} vs measured error {np.sqrt(np.mean(errors[r]**2)):.3e}"
            )

    stats = [mc_stats(errors[r]) for r in range(R)]
    hs = [problem.grid(config.n_coarse * 2**r).spacing for r in range(R)]
    fit = fit_order([s.rms for s in stats], hs)
    rows = []
    for r, (h, s) in enumerate(zip(hs, stats)):
        local = fit.local[r - 1] if (r > 0 and not fit.exact) else None
        rows.append(Row(h, s.rms, s.q10, s.median, s.q90, local, None if fit.exact else fit.slope))
    table = ConvergenceTable(config.k, config.power_step, P, rows, errors, digests)
    table.metadata = _metadata(config, problem, weights, scheme, time_note, fit, table, surrogate_checks)
    return table


def _metadata(config, problem, weights: ExtrapolationWeights, scheme, time_note, fit, table, surrogate_checks):
    cfg = asdict(config)
    cfg.pop("workers")  # results do not depend on it
    return {
        "config": cfg,
        "problem": {
            "name": problem.name,
            "horizon": config.horizon or problem.horizon,
            "symmetric_mode": problem.spec.symmetric,
            "degenerate": problem.degenerate,
            "deterministic": problem.deterministic,
            "surrogate_oracle": problem.surrogate,
        },
        "weights": {
            "k": weights.k,
            "power_step": weights.power_step,
            "rational": [str(c) for c in weights.exact],
            "decimal": list(weights.weights),
        },
        "integrator": {"scheme": scheme, "time_grid": time_note},
        "error_metric": ERROR_METRIC,
        "fit": {"slope": fit.slope, "local": list(fit.local), "exact": fit.exact},
        "noise_coupling": {"cells": len(table.digests), "shared_within_cell": table.noise_shared()},
        "surrogate_checks": [{"resolution": r, "refinement_difference": d} for r, d in surrogate_checks],
        "columns": list(CSV_COLUMNS),
    }


def solve_single(config: ExperimentConfig, path_index: int = 0, accelerate: Optional[int] = None) -> GridFunction:
    """Terminal field on the coarse grid for one path, optionally extrapolated."""
    problem = get_problem(config.problem)
    k = 0 if accelerate is None else accelerate
    scheme = resolve_scheme(config, problem)
    tgrid, _ = time_grid_for(replace(config, k=k, refinements=1), problem, scheme)
    T = float(tgrid[-1])
    path = sample_path(config.seed, path_index, tgrid, problem.noise_count)
    grids = _grids(problem, config.n_coarse, k)
    sols = [solve_path(problem.instantiate(g, T), scheme, path).terminal for g in grids]
    return extrapolate(sols, coefficients(k, config.power_step))
