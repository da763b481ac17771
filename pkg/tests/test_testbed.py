import numpy as np
import pytest
import sympy as sy

from accelfd.errors import ConfigError
from accelfd.lattice import GridFunction
from accelfd.integrator import spectral_eligible
from accelfd.noise import WienerPath, sample_path
from accelfd.stencil import apply_L, diff_second, parabolicity
from accelfd.testbed import PROBLEMS, get_problem

t, x, w = sy.symbols("t x w", real=True)

# Independent transcription of each problem: target u(t, x, W_t) and the
# continuous coefficients a, b, sigma.  Ito: du = (u_t + u_ww/2) dt + u_w dW.
SYMBOLIC = {
    "deterministic_heat_1d": (sy.exp(-t) * sy.sin(x) + sy.exp(-9 * t) * sy.sin(3 * x), 1, 0, 0),
    "transport_diffusion_1d": (sy.sin(x + w), sy.Rational(1, 2), 0, 1),
    "additive_noise_manufactured_1d": (sy.sin(x) * (1 + w), 1, 0, 0),
    "advection_diffusion_1d": (sy.exp(-t) * sy.sin(x + t), 1, 1, 0),
    "zero_operator_1d": (sy.sin(x), 0, 0, 0),
}


@pytest.mark.parametrize("name", sorted(SYMBOLIC))
def test_oracle_satisfies_ito_equation(name):
    u, a, b, sigma = SYMBOLIC[name]
    prob = get_problem(name)
    drift_gap = sy.diff(u, t) + sy.diff(u, w, 2) / 2 - (a * sy.diff(u, x, 2) + b * sy.diff(u, x))
    noise_gap = sy.diff(u, w) - sigma * sy.diff(u, x)

    rng = np.random.default_rng(1)
    pts = rng.uniform([0, 0, -2], [1, 2 * np.pi, 2], size=(12, 3))
    f = prob.spec.free_drift
    g = prob.spec.free_noise.get(0)
    for tt, xx, ww in pts:
        subs = {t: tt, x: xx, w: ww}
        f_val = 0.0 if f is None else float(f(tt, np.array(xx), np.array([ww])))
        g_val = 0.0 if g is None else float(g(tt, np.array(xx), np.array([ww])))
        assert float(drift_gap.subs(subs)) == pytest.approx(f_val, abs=1e-12)
        assert float(noise_gap.subs(subs)) == pytest.approx(g_val, abs=1e-12)

    # oracle code agrees with the symbolic target
    grid = prob.grid(16)
    path = WienerPath(1, [0.0, 0.7], [[0.4]]) if prob.noise_count else WienerPath(0, [0.0, 0.7], np.zeros((1, 0)))
    target = sy.lambdify(x, u.subs({t: 0.7, w: 0.4}), "numpy")
    np.testing.assert_allclose(prob.exact(grid, path).values, np.broadcast_to(target(grid.coordinates()[0]), grid.shape), atol=1e-14)


def test_oracle_initial_data_match():
    for name in SYMBOLIC:
        prob = get_problem(name)
        grid = prob.grid(32)
        path = sample_path(0, 0, [0.0, prob.horizon], prob.noise_count)
        np.testing.assert_allclose(prob.exact(grid, path, 0.0).values, grid.sample(prob.initial).values, atol=1e-15)


def test_heat_oracle_value():
    prob = get_problem("deterministic_heat_1d")
    val = prob.oracle(1.0, None, np.array(np.pi / 2))
    assert val == pytest.approx(0.367756, abs=1e-6)


def test_transport_oracle_is_translation():
    prob = get_problem("transport_diffusion_1d")
    grid = prob.grid(32)
    path = WienerPath(1, [0.0, 1.0], [[np.pi / 2]])
    np.testing.assert_allclose(prob.exact(grid, path).values, np.cos(grid.coordinates()[0]), atol=1e-15)


def test_parabolicity_flags():
    heat = get_problem("deterministic_heat_1d")
    assert parabolicity(heat.continuous, heat.grid(16)).status == "uniform"
    tr = get_problem("transport_diffusion_1d")
    rep = parabolicity(tr.continuous, tr.grid(16))
    assert rep.status == "degenerate" and tr.degenerate


def test_variable_coefficient_bounded_below():
    prob = get_problem("variable_coefficient_1d")
    rep = parabolicity(prob.continuous, prob.grid(64))
    assert rep.min_eigenvalue >= 0.5 - 1e-14
    assert rep.status == "uniform"


def test_variable_coefficient_summation_by_parts():
    # sum a * Delta u = sum u * Delta a on the torus since Delta is symmetric
    prob = get_problem("variable_coefficient_1d")
    grid = prob.grid(40)
    u = GridFunction(grid, np.random.default_rng(5).standard_normal(40))
    a = grid.sample(lambda x: 1.0 + 0.5 * np.sin(x))
    lhs = np.sum(apply_L(prob.spec, 0.0, u).values)
    rhs = np.sum(u.values * diff_second(a, 1).values)
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_surrogate_reference_converges():
    prob = get_problem("variable_coefficient_1d")
    grid = prob.grid(16)
    refs = [prob.surrogate_reference(grid, lv) for lv in (1, 2, 3, 4)]
    diffs = [np.max(np.abs((refs[i + 1] - refs[i]).values)) for i in range(3)]
    ratios = [diffs[i] / diffs[i + 1] for i in range(2)]
    assert all(3.5 < r < 4.5 for r in ratios)
    with pytest.raises(ValueError):
        prob.exact(grid, sample_path(0, 0, [0.0, 0.5], 0))


def test_surrogate_rejects_stochastic():
    prob = get_problem("transport_diffusion_1d")
    with pytest.raises(ValueError):
        prob.surrogate_reference(prob.grid(8), 2)


def test_registry():
    assert set(SYMBOLIC) | {"variable_coefficient_1d"} == set(PROBLEMS)
    assert get_problem("deterministic_heat_1d", 0.25).horizon == 0.25
    with pytest.raises(ConfigError, match="available"):
        get_problem("no_such_problem")


def test_spectral_flags_consistent():
    for name, factory in PROBLEMS.items():
        prob = factory()
        assert spectral_eligible(prob.instantiate(prob.grid(8))) == prob.spectral_exact_ok, name
