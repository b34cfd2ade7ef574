import math

import numpy as np
import pytest

from radnls import (
    GridFunction,
    RadialGrid,
    SolverParams,
    make_grid,
    power_nonlinearity,
    sample,
)


def test_make_grid_small():
    g = make_grid(1.0, 4)
    assert g.h == 0.25
    assert np.allclose(g.nodes, [0.0, 0.25, 0.5, 0.75, 1.0], rtol=0, atol=0)


def test_make_grid_paper_sizes():
    g = make_grid(30.0, 2**12)
    assert g.h == 30.0 / 4096
    assert g.nodes[0] == 0.0
    assert g.nodes[-1] == pytest.approx(30.0, abs=4 * np.spacing(30.0))
    assert make_grid(100.0, 2**12).nodes[-1] == pytest.approx(100.0, abs=4e-13)


def test_grid_arithmetic_exact():
    g = make_grid(30.0, 2**10)
    k = np.arange(g.N + 1)
    assert np.all(np.abs(g.nodes - k * (30.0 / 2**10)) <= 4 * np.spacing(30.0))
    assert np.all(np.diff(g.nodes) > 0)


def test_make_grid_rejects():
    with pytest.raises(ValueError):
        make_grid(0.0, 16)
    with pytest.raises(ValueError):
        make_grid(-1.0, 16)
    with pytest.raises(ValueError):
        make_grid(1.0, 3)


def test_params_validation():
    SolverParams(d=2, omega=1.0, p=3.0, R=30.0, N=16)
    SolverParams(d=1, omega=2.0, p=7.0, R=5.0, N=8)  # subcritical for d <= 2
    SolverParams(d=3, omega=1.0, p=4.99, R=5.0, N=8)
    with pytest.raises(ValueError, match="subcritical"):
        SolverParams(d=3, omega=1.0, p=5.0, R=5.0, N=8)
    with pytest.raises(ValueError, match="subcritical"):
        SolverParams(d=2, omega=1.0, p=1.0, R=5.0, N=8)
    with pytest.raises(ValueError):
        SolverParams(d=2, omega=0.0, p=3.0, R=5.0, N=8)
    with pytest.raises(ValueError):
        SolverParams(d=2, omega=1.0, p=3.0, R=5.0, N=3)


def test_sample_zero_and_identity():
    g = make_grid(1.0, 4)
    z = sample(lambda r: 0.0, g)
    assert np.all(z.values == 0.0)
    ident = sample(lambda r: r, g)
    assert np.array_equal(ident.values, [0.0, 0.25, 0.5, 0.75])


def test_sample_paper_initial_datum():
    g = make_grid(30.0, 2**12)
    u = sample(lambda r: math.cos(r) * math.exp(-(r**2) / 30.0), g)
    assert u.values[0] == 1.0
    assert u.values.size == 2**12


def test_sample_rejects_nonfinite():
    g = make_grid(1.0, 4)
    with pytest.raises(ValueError, match="finite"):
        sample(lambda r: 1.0 / (r - 0.5), g)


def test_grid_function_shape_check():
    g = make_grid(1.0, 4)
    with pytest.raises(ValueError):
        GridFunction(np.zeros(5), g)


def test_power_nonlinearity_values():
    f3 = power_nonlinearity(3.0)
    assert f3.f(2.0) == 8.0
    assert f3.F(2.0) == 4.0
    assert f3.f(-2.0) == -8.0  # oddness
    f2 = power_nonlinearity(2.0)
    assert f2.f(-3.0) == -9.0
    assert f2.F(-3.0) == 9.0


def test_power_nonlinearity_rejects():
    with pytest.raises(ValueError):
        power_nonlinearity(1.0)
    with pytest.raises(ValueError):
        power_nonlinearity(0.5)


def test_oddness_property():
    rng = np.random.default_rng(7)
    s = rng.uniform(-50.0, 50.0, size=1000)
    for p in (2.0, 2.5, 3.0):
        f = power_nonlinearity(p)
        assert np.array_equal(f.f(-s), -f.f(s))


@pytest.mark.parametrize("p", [2.0, 3.0, 3.5])
def test_primitive_derivative_matches(p):
    # centered difference of F reproduces f at O(delta^2)
    f = power_nonlinearity(p)
    rng = np.random.default_rng(11)
    pts = rng.uniform(0.5, 3.0, size=20) * rng.choice([-1.0, 1.0], size=20)
    for delta in (1e-2, 1e-3, 1e-4):
        fd = (f.F(pts + delta) - f.F(pts - delta)) / (2 * delta)
        scale = np.abs(pts) ** max(p - 1.0, 0.0) * p + 1.0
        assert np.all(np.abs(fd - f.f(pts)) <= 2.0 * scale * delta**2)


def test_nonlinearity_F_nonnegative():
    f = power_nonlinearity(2.5)
    rng = np.random.default_rng(3)
    s = rng.normal(size=200)
    assert np.all(f.F(s) >= 0)
    assert f.F(0.0) == 0.0


def test_radial_grid_direct_construction():
    # spec examples use 2-sample grids; raw construction bypasses make_grid
    g = RadialGrid(R=2.0, N=2)
    assert g.h == 1.0
    assert np.array_equal(g.r, [0.0, 1.0])
