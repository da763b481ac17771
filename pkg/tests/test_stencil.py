import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accelfd.errors import CoefficientError, DecompositionError, GridError
from accelfd.lattice import GridFunction, build_grid, periodic_grid
from accelfd.stencil import (
    ContinuousOperator,
    OperatorSpec,
    apply_L,
    apply_M,
    consistency_check,
    continuous_from_spec,
    decompose_diffusion,
    diff_backward,
    diff_central,
    diff_forward,
    diff_second,
    matrix_L,
    matrix_M,
    monomial_residual,
    parabolicity,
    symbol_L,
    symbol_M,
)


def padded(n=11, h=0.1, x0=0.0):
    return build_grid(1, h, n, x0, "zero-padded", 1)


def interior(f):
    return f.values[1:-1]


def test_second_difference_exact_on_quadratic():
    for h in (0.1, 0.37):
        g = padded(h=h, x0=-0.4)
        out = diff_second(g.sample(lambda x: x**2), 1)
        np.testing.assert_allclose(interior(out), 2.0, rtol=0, atol=1e-10)


def test_central_difference_cubic():
    g = build_grid(1, 0.1, 21, 0.0, "zero-padded", 1)
    out = diff_central(g.sample(lambda x: x**3), 1)
    # node 10 is x = 1: (1.1^3 - 0.9^3) / 0.2
    assert g.node((10,))[0] == pytest.approx(1.0)
    assert out.values[10] == pytest.approx(3.01, abs=1e-12)


def test_forward_exact_on_linear():
    g = padded(h=0.25)
    np.testing.assert_allclose(interior(diff_forward(g.sample(lambda x: x), 1))[:-1], 1.0, atol=1e-12)
    np.testing.assert_allclose(interior(diff_backward(g.sample(lambda x: x), 1)), 1.0, atol=1e-12)


@pytest.mark.parametrize("op", [diff_forward, diff_backward, diff_central, diff_second])
def test_differences_annihilate_constants(op):
    g = periodic_grid(12)
    assert np.all(op(GridFunction(g, np.full(12, 4.2)), 1).values == 0)


def test_central_is_mean_of_one_sided():
    g = periodic_grid(16)
    f = g.sample(lambda x: np.exp(np.sin(x)))
    avg = 0.5 * (diff_forward(f, 1).values + diff_backward(f, 1).values)
    np.testing.assert_allclose(diff_central(f, 1).values, avg, atol=1e-14)
    # second difference is forward of backward
    fb = diff_forward(diff_backward(f, 1), 1)
    np.testing.assert_allclose(diff_second(f, 1).values, fb.values, atol=1e-11)


@given(st.integers(3, 20), st.integers(0, 2**32 - 1))
def test_summation_by_parts(n, seed):
    rng = np.random.default_rng(seed)
    g = build_grid(1, 0.3, n)
    f = GridFunction(g, rng.standard_normal(n))
    q = GridFunction(g, rng.standard_normal(n))
    lhs = np.dot(diff_forward(f, 1).values, q.values)
    rhs = -np.dot(f.values, diff_backward(q, 1).values)
    assert lhs == pytest.approx(rhs, abs=1e-10 * (1 + abs(lhs)))


def heat_spec(a=1.0, **kw):
    return OperatorSpec(directions=[(1,)], a={(1,): a}, **kw)


def test_apply_L_sine_symbol():
    g = periodic_grid(32)
    h = g.spacing
    u = g.sample(np.sin)
    expected = (2 * np.cos(h) - 2) / h**2 * np.sin(g.axis_coordinates(0))
    np.testing.assert_allclose(apply_L(heat_spec(), 0.0, u).values, expected, atol=1e-12)


def test_apply_L_identity_and_constant():
    g = periodic_grid(10)
    u = g.sample(np.cos)
    spec = OperatorSpec(directions=[(1,)], c=1.0)
    np.testing.assert_array_equal(apply_L(spec, 0.0, u).values, u.values)
    const = GridFunction(g, np.full(10, 2.0))
    assert np.all(apply_L(heat_spec(3.0), 0.0, const).values == 0)


def test_apply_L_reports_nonfinite_coefficient():
    g = periodic_grid(8)
    spec = OperatorSpec(directions=[(1,)], a={(1,): lambda t, x: 1 / (x - x[3])})
    with pytest.raises(CoefficientError, match="node"), np.errstate(divide="ignore"):
        apply_L(spec, 0.0, g.sample(np.sin))


def test_apply_M_cases():
    g = padded(h=0.2)
    spec = OperatorSpec(directions=[(1,)], noise_count=1, sigma={((1,), 0): 1.0})
    np.testing.assert_allclose(interior(apply_M(spec, 0, 0.0, g.sample(lambda x: x))), 1.0, atol=1e-12)
    spec_nu = OperatorSpec(directions=[(1,)], noise_count=1, nu={0: 1.0})
    u = g.sample(np.exp)
    np.testing.assert_array_equal(apply_M(spec_nu, 0, 0.0, u).values, u.values)
    gp = periodic_grid(24)
    h = gp.spacing
    x = gp.axis_coordinates(0)
    np.testing.assert_allclose(apply_M(spec, 0, 0.0, gp.sample(np.sin)).values, np.cos(x) * np.sin(h) / h, atol=1e-13)
    with pytest.raises(IndexError):
        apply_M(spec, 1, 0.0, u)


def test_operator_spec_rejects_unknown_direction():
    with pytest.raises(GridError):
        OperatorSpec(directions=[(1,)], a={(2,): 1.0})


def test_monotonicity_violations_reported():
    g = periodic_grid(8)
    spec = OperatorSpec(directions=[(1,)], a={(1,): lambda t, x: np.cos(x)})
    bad = spec.monotonicity_violations(g)
    assert bad and all(v < 0 for _, _, v in bad)


@pytest.mark.parametrize("symmetric", [True, False])
def test_matrices_match_pointwise_operators(symmetric):
    for grid in (periodic_grid(9), build_grid(2, 0.3, (5, 6), boundary_mode="zero-padded", margin=1)):
        d = grid.dim
        dirs = [(1,)] if d == 1 else [(1, 0), (0, 1), (1, 1), (1, -1)]
        rng = np.random.default_rng(1)
        spec = OperatorSpec(
            directions=dirs,
            a={l: (lambda t, *x, s=i: 1.0 + 0.1 * s + 0.0 * x[0]) for i, l in enumerate(dirs)},
            b={dirs[0]: 0.7},
            c=-0.3,
            noise_count=1,
            sigma={(dirs[-1], 0): 0.4},
            nu={0: 0.2},
            symmetric=symmetric,
        )
        u = GridFunction(grid, rng.standard_normal(grid.size))
        np.testing.assert_allclose(matrix_L(spec, 0.0, grid) @ u.values, apply_L(spec, 0.0, u).values, atol=1e-10)
        np.testing.assert_allclose(matrix_M(spec, 0, 0.0, grid) @ u.values, apply_M(spec, 0, 0.0, u).values, atol=1e-10)


@pytest.mark.parametrize("symmetric", [True, False])
def test_symbols_are_eigenvalues(symmetric):
    g = build_grid(2, 0.4, (6, 8))
    spec = OperatorSpec(
        directions=[(1, 0), (0, 1), (1, 1)],
        a={(1, 0): 1.0, (0, 1): 0.5, (1, 1): 0.25},
        b={(1, 0): 0.3, (1, 1): -0.2},
        c=0.1,
        noise_count=1,
        sigma={((0, 1), 0): 0.6},
        nu={0: 0.05},
        symmetric=symmetric,
    )
    rng = np.random.default_rng(3)
    u = GridFunction(g, rng.standard_normal(g.size))
    via_fft = np.fft.ifftn(symbol_L(spec, g) * np.fft.fftn(u.array)).real
    np.testing.assert_allclose(via_fft, apply_L(spec, 0.0, u).array, atol=1e-11)
    via_fft = np.fft.ifftn(symbol_M(spec, 0, g) * np.fft.fftn(u.array)).real
    np.testing.assert_allclose(via_fft, apply_M(spec, 0, 0.0, u).array, atol=1e-11)


def test_symmetric_mode_commutes_with_reflection():
    # even coefficients: cos(x) is even about 0 on the periodic grid
    g = periodic_grid(20)
    spec = OperatorSpec(directions=[(1,)], a={(1,): lambda t, x: 1.5 + np.cos(x)}, c=lambda t, x: np.cos(2 * x))
    rng = np.random.default_rng(5)
    u = rng.standard_normal(20)
    reflect = lambda v: np.roll(v[::-1], 1)  # x_i -> x_{-i}
    lhs = apply_L(spec, 0.0, GridFunction(g, reflect(u))).values
    rhs = reflect(apply_L(spec, 0.0, GridFunction(g, u)).values)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_decompose_examples():
    assert decompose_diffusion([[2.0]], [(1,)]) == {(1,): 2.0}
    w = decompose_diffusion(np.eye(2), [(1, 0), (0, 1)])
    assert w == pytest.approx({(1, 0): 1.0, (0, 1): 1.0})
    dirs = [(1, 0), (0, 1), (1, 1), (1, -1)]
    a = np.array([[1.0, 0.5], [0.5, 1.0]])
    w = decompose_diffusion(a, dirs)
    assert [w[l] for l in dirs] == pytest.approx([0.5, 0.5, 0.5, 0.0], abs=1e-14)
    rebuilt = sum(w[l] * np.outer(l, l) for l in dirs)
    np.testing.assert_allclose(rebuilt, a, rtol=0, atol=1e-14)


def test_decompose_infeasible():
    with pytest.raises(DecompositionError) as info:
        decompose_diffusion([[1.0, 0.9], [0.9, 1.0]], [(1, 0), (0, 1)])
    assert info.value.residual > 0


@settings(max_examples=50)
@given(st.floats(0.1, 3), st.floats(0.1, 3), st.floats(-0.9, 0.9))
def test_decompose_reproduces_matrix(s1, s2, rho):
    off = rho * min(s1, s2) * 0.5  # diagonally dominant, feasible with 4 directions
    a = np.array([[s1, off], [off, s2]])
    dirs = [(1, 0), (0, 1), (1, 1), (1, -1)]
    w = decompose_diffusion(a, dirs)
    assert min(w.values()) >= 0
    rebuilt = sum(w[l] * np.outer(l, l) for l in dirs)
    np.testing.assert_allclose(rebuilt, a, rtol=1e-12, atol=1e-12 * np.abs(a).max())


def test_consistency_heat_quadratic_and_quartic():
    spec = heat_spec()
    cont = ContinuousOperator(a_matrix=[[1.0]])
    g = build_grid(1, 0.1, 21, -1.0, "zero-padded", 1)
    rep = consistency_check(spec, cont, g, 2)
    assert rep.max_scaled <= 1e-12
    res = monomial_residual(spec, cont, g, (4,))
    # Delta_h x^4 = 12 x^2 + 2 h^2 at every node
    assert res.max_abs == pytest.approx(0.02, rel=1e-10)


def test_consistency_noise_operator():
    spec = OperatorSpec(directions=[(1,)], noise_count=1, sigma={((1,), 0): 1.0})
    cont = ContinuousOperator(a_matrix=[[0.0]], sigma_matrix=[[1.0]], noise_count=1)
    g = build_grid(1, 0.05, 41, -1.0, "zero-padded", 1)
    assert monomial_residual(spec, cont, g, (1,), "M0").max_abs <= 1e-12
    assert consistency_check(spec, cont, g, 2).max_scaled <= 1e-12


def test_consistency_2d_with_decomposition():
    a = np.array([[1.0, 0.3], [0.3, 0.8]])
    dirs = [(1, 0), (0, 1), (1, 1), (1, -1)]
    spec = OperatorSpec(directions=dirs, a=decompose_diffusion(a, dirs), b={(1, 0): 0.5, (0, 1): -0.25}, c=0.2)
    cont = ContinuousOperator(a_matrix=a, b_vector=[0.5, -0.25], c_scalar=0.2)
    g = build_grid(2, 0.1, 15, -0.7, "zero-padded", 1)
    assert consistency_check(spec, cont, g, 2).max_scaled <= 1e-12
    cont2 = continuous_from_spec(spec)
    np.testing.assert_allclose(cont2.a_matrix, a, atol=1e-14)


def test_forward_mode_not_exact_on_quadratics():
    spec = OperatorSpec(directions=[(1,)], b={(1,): 1.0}, symmetric=False)
    cont = ContinuousOperator(a_matrix=[[0.0]], b_vector=[1.0])
    g = build_grid(1, 0.1, 21, -1.0, "zero-padded", 1)
    assert consistency_check(spec, cont, g, 1).max_scaled <= 1e-12
    # (x+h)^2 - x^2 over h = 2x + h
    assert monomial_residual(spec, cont, g, (2,)).max_abs == pytest.approx(0.1, rel=1e-10)


def test_parabolicity_status():
    g = periodic_grid(8)
    assert parabolicity(ContinuousOperator([[1.0]]), g).status == "uniform"
    deg = ContinuousOperator([[0.5]], sigma_matrix=[[1.0]], noise_count=1)
    assert parabolicity(deg, g).status == "degenerate"
    bad = ContinuousOperator([[0.4]], sigma_matrix=[[1.0]], noise_count=1)
    assert parabolicity(bad, g).status == "violated"
