import math

import numpy as np
import pytest

from radnls import (
    DegenerateZeroError,
    GridFunction,
    RadialGrid,
    SolverParams,
    action,
    decompose,
    functionals,
    grad_component,
    grad_components,
    lp_component,
    lp_components,
    make_grid,
    nehari_residuals,
    project,
    sample,
)


def gf(values, R=None):
    values = np.asarray(values, dtype=float)
    grid = RadialGrid(R=R if R is not None else float(values.size), N=values.size)
    return GridFunction(values, grid)


def smooth_state(params, freq=1.0, seed=None):
    g = params.grid()
    u = sample(lambda r: math.cos(freq * r) * math.exp(-(r**2) / 40.0), g)
    return u


# ---------------------------------------------------------------- decompose


def test_decompose_symmetric_pair():
    u = gf([1.0, -1.0], R=2.0)
    dec = decompose(u)
    assert dec.n_nodes == 1
    assert dec.node_positions[0] == pytest.approx(0.5)


def test_decompose_interpolated_root():
    u = gf([2.0, -1.0], R=2.0)
    dec = decompose(u)
    # root of the line through (0, 2), (1, -1)
    assert dec.node_positions[0] == pytest.approx(2.0 / 3.0)
    assert dec.sign_change_left[0] == 0
    assert dec.sign_change_right[0] == 1


def test_decompose_cosine_zeros():
    params = SolverParams(d=2, omega=1.0, p=3.0, R=30.0, N=2**12)
    u = sample(lambda r: math.cos(r) * math.exp(-(r**2) / 30.0), params.grid())
    dec = decompose(u)
    true_zeros = np.array([math.pi / 2 + j * math.pi for j in range(dec.n_nodes)])
    assert dec.n_nodes == len(true_zeros)
    assert np.all(np.abs(dec.node_positions - true_zeros) <= params.h)


def test_decompose_component_structure():
    u = gf([1.0, 2.0, -1.0, -3.0, 0.5])
    dec = decompose(u)
    assert dec.n_nodes == 2
    assert dec.component_ranges == ((0, 2), (2, 4), (4, 5))
    # signs constant within and alternating between components
    v = u.values
    for (a, b), sign in zip(dec.component_ranges, (1.0, -1.0, 1.0)):
        assert np.all(np.sign(v[a:b]) == sign)


def test_decompose_node_refinement_order():
    # interpolated zero converges to the true zero at order ~2
    errs, hs = [], []
    for N in (2**8, 2**9, 2**10, 2**11, 2**12):
        params = SolverParams(d=1, omega=1.0, p=3.0, R=30.0, N=N)
        u = sample(lambda r: math.cos(r) * math.exp(-(r**2) / 30.0), params.grid())
        dec = decompose(u)
        errs.append(abs(dec.node_positions[0] - math.pi / 2))
        hs.append(params.h)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 1.8


def test_decompose_scaling_invariance():
    params = SolverParams(d=2, omega=1.0, p=3.0, R=20.0, N=256)
    u = smooth_state(params)
    dec = decompose(u)
    dec2 = decompose(u.with_values(3.7 * u.values))
    assert np.array_equal(dec.sign_change_left, dec2.sign_change_left)
    assert np.array_equal(dec.node_positions, dec2.node_positions)
    assert dec.component_ranges == dec2.component_ranges


def test_decompose_zero_policies():
    u = gf([1.0, 0.0, -1.0])
    dec = decompose(u)  # nudge: the zero carries its left neighbour's sign
    assert dec.n_nodes == 1
    assert dec.node_positions[0] == pytest.approx(u.grid.r[1])
    with pytest.raises(DegenerateZeroError):
        decompose(u, policy="reject")
    lead = decompose(gf([0.0, 2.0, -1.0]))  # leading zero takes the right sign
    assert lead.n_nodes == 1


def test_decompose_all_zero():
    dec = decompose(gf([0.0, 0.0, 0.0, 0.0]))
    assert dec.n_nodes == 0


# ---------------------------------------------------------------- lp masses


def test_lp_zero_function():
    params = SolverParams(d=2, omega=1.0, p=3.0, R=10.0, N=64)
    u = sample(lambda r: 0.0, params.grid())
    dec = decompose(u)
    assert lp_component(u, dec, 0, 2.0, params.d) == 0.0


def test_lp_constant_d1():
    # exact value R - h/2; the spec's O(h) statement follows
    for N in (2**8, 2**10):
        params = SolverParams(d=1, omega=1.0, p=3.0, R=3.0, N=N)
        u = sample(lambda r: 1.0, params.grid())
        dec = decompose(u)
        val = lp_component(u, dec, 0, 2.0, params.d)
        assert val == pytest.approx(3.0 - params.h / 2, rel=1e-13)
        assert abs(val - 3.0) <= params.h


def test_lp_ramp_d2_wall_defect():
    # u(r)=r violates the Dirichlet convention; the wall cell costs O(h):
    # value = 1/4 - h/2 + O(h^2) against the exact moment integral 1/4
    errs = []
    for N in (2**8, 2**10):
        params = SolverParams(d=2, omega=1.0, p=3.0, R=1.0, N=N)
        u = sample(lambda r: r, params.grid())
        val = lp_component(u, decompose(u), 0, 2.0, params.d)
        assert val == pytest.approx(0.25 - params.h / 2, abs=5 * params.h**2)
        errs.append(abs(val - 0.25))
    assert errs[1] <= errs[0] / 3  # first order, not worse


def test_lp_smooth_dirichlet_second_order():
    # u = 1 - r^2 vanishes at R = 1; exact integral of (1-r^2)^2 r is 1/6
    errs, hs = [], []
    for N in (2**7, 2**8, 2**9, 2**10):
        params = SolverParams(d=2, omega=1.0, p=3.0, R=1.0, N=N)
        u = sample(lambda r: 1.0 - r**2, params.grid())
        val = lp_component(u, decompose(u), 0, 2.0, params.d)
        errs.append(abs(val - 1.0 / 6.0))
        hs.append(params.h)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 1.8


def test_lp_exponent_validation():
    params = SolverParams(d=2, omega=1.0, p=3.0, R=10.0, N=64)
    u = smooth_state(params)
    dec = decompose(u)
    with pytest.raises(ValueError):
        lp_component(u, dec, 0, 1.0, params.d)
    with pytest.raises(IndexError):
        lp_component(u, dec, dec.n_nodes + 1, 2.0, params.d)


# ---------------------------------------------------------------- gradients


def test_grad_zero_function():
    params = SolverParams(d=2, omega=1.0, p=3.0, R=10.0, N=64)
    u = sample(lambda r: 0.0, params.grid())
    assert grad_component(u, decompose(u), 0, params.d) == 0.0


def test_grad_ramp_interior_sum_d1():
    # the interior centered-difference sum reproduces the exact derivative
    # energy of the ramp, int_0^1 1 dr = 1; its value is 1 - 2h exactly
    for N in (2**6, 2**8):
        params = SolverParams(d=1, omega=1.0, p=3.0, R=1.0, N=N)
        g = params.grid()
        u = sample(lambda r: r, g)
        v, h = u.values, g.h
        cd = (v[2:] - v[:-2]) / (2 * h)
        interior = h * np.sum(cd**2)
        assert interior == pytest.approx(1.0 - 2 * params.h, rel=1e-12)
        assert abs(interior - 1.0) <= 2.5 * params.h


def test_grad_full_formula_ramp_wall_term():
    # full component formula adds the Dirichlet wall term u_{N-1}^2/(8h)
    params = SolverParams(d=1, omega=1.0, p=3.0, R=1.0, N=2**6)
    g = params.grid()
    u = sample(lambda r: r, g)
    v, h = u.values, g.h
    cd = (v[2:-1] - v[:-3]) / (2 * h)
    expected = h * np.sum(cd**2) + (h / 2) * (v[-2] / (2 * h)) ** 2
    got = grad_component(u, decompose(u), 0, params.d)
    assert got == pytest.approx(expected, rel=1e-12)


def test_grad_smooth_consistency():
    # nodeless Gaussian: gradient energy converges to the exact integral
    # int (2 r e^{-r^2})^2 r dr on [0, 8] (d = 2), computed by quadrature
    from scipy.integrate import quad

    exact, _ = quad(lambda r: (2 * r * np.exp(-(r**2))) ** 2 * r, 0.0, 8.0)
    errs, hs = [], []
    for N in (2**8, 2**9, 2**10, 2**11):
        params = SolverParams(d=2, omega=1.0, p=3.0, R=8.0, N=N)
        u = sample(lambda r: math.exp(-(r**2)), params.grid())
        val = grad_component(u, decompose(u), 0, params.d)
        errs.append(abs(val - exact))
        hs.append(params.h)
    assert errs[-1] < errs[0]
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 1.5


def test_homogeneity_under_global_scaling():
    params = SolverParams(d=3, omega=1.0, p=3.0, R=20.0, N=512)
    u = smooth_state(params, freq=1.3)
    dec = decompose(u)
    t = 2.5
    ut = u.with_values(t * u.values)
    n1 = grad_components(u, dec, params.d)
    n2 = grad_components(ut, dec, params.d)
    assert np.allclose(n2, t**2 * n1, rtol=1e-13)
    for q in (2.0, 4.0):
        l1 = lp_components(u, dec, q, params.d)
        l2 = lp_components(ut, dec, q, params.d)
        assert np.allclose(l2, t**q * l1, rtol=1e-13)


def test_virtual_edges_match_literal_at_consistency():
    # the node-anchored reconstruction reproduces the printed across-node
    # samples exactly when the decomposition belongs to the vector
    rng = np.random.default_rng(5)
    for d in (1, 2, 3):
        params = SolverParams(d=d, omega=1.0, p=3.0, R=20.0, N=300)
        g = params.grid()
        c = rng.uniform(0.8, 1.6)
        u = sample(lambda r: math.cos(c * r) * math.exp(-(r**2) / 50.0), g)
        dec = decompose(u)
        a = grad_components(u, dec, d, coupled=False)
        b = grad_components(u, dec, d, coupled=True)
        assert np.allclose(a, b, rtol=5e-13)


def test_node_corrected_switch():
    params = SolverParams(d=2, omega=1.0, p=3.0, R=20.0, N=256)
    u = smooth_state(params)
    dec = decompose(u)
    corrected = lp_components(u, dec, 2.0, params.d)
    plain = lp_components(u, dec, 2.0, params.d, node_corrected=False)
    assert not np.allclose(corrected, plain)
    assert np.allclose(corrected, plain, atol=2 * params.h * np.max(np.abs(corrected)))


# ---------------------------------------------------------------- residuals


def test_residual_small_bump_positive():
    params = SolverParams(d=2, omega=1.0, p=3.0, R=10.0, N=256)
    u = sample(lambda r: 1e-3 * math.exp(-((r - 3) ** 2)), params.grid())
    res = nehari_residuals(u, decompose(u), params)
    assert np.all(res > 0)


def test_residual_large_scaling_negative():
    params = SolverParams(d=2, omega=1.0, p=3.0, R=20.0, N=256)
    u = smooth_state(params)
    big = u.with_values(50.0 * u.values)
    res = nehari_residuals(big, decompose(big), params)
    assert np.all(res < 0)


def test_residual_after_projection():
    params = SolverParams(d=2, omega=1.0, p=3.0, R=20.0, N=512)
    u = smooth_state(params, freq=1.2)
    dec = decompose(u)
    v = project(u, params, dec=dec)
    fun = functionals(v, dec, params)
    assert np.max(np.abs(fun.residual)) <= 1e-10 * np.max(fun.quad_energy)


# ------------------------------------------------------------------- action


def test_action_zero_function():
    params = SolverParams(d=2, omega=1.0, p=3.0, R=10.0, N=64)
    u = sample(lambda r: 0.0, params.grid())
    assert action(u, decompose(u), params) == 0.0


def test_action_manifold_identity():
    # with all residuals zero, S = sum (1/2 - 1/(p+1)) L^{p+1}_k > 0
    for p in (2.0, 3.0):
        params = SolverParams(d=2, omega=1.0, p=p, R=20.0, N=512)
        u = smooth_state(params)
        dec = decompose(u)
        v = project(u, params, dec=dec)
        fun = functionals(v, dec, params)
        expected = (0.5 - 1.0 / (p + 1.0)) * np.sum(fun.lp1)
        assert fun.action == pytest.approx(expected, rel=1e-11)
        assert fun.action > 0
