import math

import numpy as np
import pytest

from radnls import (
    BracketExpansionFailedError,
    Nonlinearity,
    SolverParams,
    bisect,
    count_nodes,
    integrate,
    power_nonlinearity,
    rhs,
)


class ZeroNonlinearity(Nonlinearity):
    """f = 0: the radial profile equation becomes linear."""

    def f(self, s):
        return np.zeros_like(np.asarray(s, dtype=float)) if np.ndim(s) else 0.0

    def F(self, s):
        return np.zeros_like(np.asarray(s, dtype=float)) if np.ndim(s) else 0.0


P1 = SolverParams(d=1, omega=1.0, p=3.0, R=30.0, N=64)


def test_rhs_center_limit():
    params = SolverParams(d=3, omega=1.0, p=3.0, R=10.0, N=64)
    f = power_nonlinearity(3.0)
    du, ddu = rhs(0.0, (2.0, 0.0), params, f)
    assert du == 0.0
    assert ddu == pytest.approx((2.0 - 8.0) / 3.0)  # = -2


def test_rhs_linear_case():
    du, ddu = rhs(1.0, (1.0, 0.0), P1, ZeroNonlinearity())
    assert (du, ddu) == (0.0, 1.0)  # cosh equation u'' = u


def test_rhs_center_continuity():
    # for a smooth radial state with u' = u''(0) r the right-hand side is
    # continuous at the center
    params = SolverParams(d=3, omega=1.0, p=3.0, R=10.0, N=64)
    f = power_nonlinearity(3.0)
    u0 = 2.0
    ddu0 = (params.omega * u0 - f.f(u0)) / params.d
    r = 1e-8
    near = rhs(r, (u0 + 0.5 * ddu0 * r**2, ddu0 * r), params, f)
    at0 = rhs(0.0, (u0, 0.0), params, f)
    assert abs(near[1] - at0[1]) <= 1e-6


def test_rhs_rejects_nonfinite():
    with pytest.raises(ValueError):
        rhs(1.0, (math.inf, 0.0), P1, power_nonlinearity(3.0))


def test_integrate_linear_cosh():
    # d = 1, f = 0: u'' = u with u(0) = 1, u'(0) = 0 is cosh(r)
    traj = integrate(1.0, P1, step=1e-3, r_max=1.0, nonlinearity=ZeroNonlinearity())
    assert traj.u[-1] == pytest.approx(math.cosh(1.0), abs=1e-8)
    assert traj.du[-1] == pytest.approx(math.sinh(1.0), abs=1e-8)


def test_integrate_soliton_profile():
    # the amplitude-sqrt(2) trajectory follows the 1-d soliton sqrt(2) sech(r)
    traj = integrate(math.sqrt(2.0), P1, step=1e-3, r_max=15.0)
    exact = math.sqrt(2.0) / np.cosh(traj.r)
    assert np.max(np.abs(traj.u - exact)) <= 1e-4


def test_integrate_zero_amplitude():
    traj = integrate(0.0, P1, step=1e-2, r_max=2.0)
    assert np.all(traj.u == 0.0)
    assert not traj.diverged


def test_integrate_divergence_cap():
    traj = integrate(50.0, P1, step=1e-3, r_max=30.0, cap=1e8)
    assert traj.diverged
    assert traj.r[-1] < 30.0
    assert np.all(np.abs(traj.u) <= 1e8)


def test_count_nodes_basic():
    base = integrate(0.0, P1, step=1.0, r_max=2.0)
    t1 = type(base)(r=base.r, u=np.array([1.0, -1.0, 1.0]), du=base.du,
                    step=1.0, diverged=False)
    assert count_nodes(t1) == 2
    t2 = type(base)(r=base.r, u=np.array([1.0, 0.5, 0.2]), du=base.du,
                    step=1.0, diverged=False)
    assert count_nodes(t2) == 0


def test_count_between_ground_and_first_excited():
    # d = 2: between alpha_0 and alpha_1 the trajectory crosses zero once and
    # settles on the negative side (toward the equilibrium -omega^(1/(p-1)))
    params = SolverParams(d=2, omega=1.0, p=3.0, R=30.0, N=64)
    a0 = bisect(0, 10.0, 1e-10, params, step=1e-3, r_max=30.0).alpha
    a1 = bisect(1, 10.0, 1e-10, params, step=1e-3, r_max=30.0).alpha
    assert a0 < a1
    mid = 0.5 * (a0 + a1)
    traj = integrate(mid, params, step=1e-3, r_max=30.0)
    assert count_nodes(traj) == 1
    assert traj.u[-1] < 0
    assert traj.u[-1] == pytest.approx(-1.0, abs=0.3)


def test_bisect_soliton_amplitude():
    out = bisect(0, 10.0, 1e-12, P1, step=1e-3, r_max=30.0)
    assert abs(out.alpha - math.sqrt(2.0)) <= 1e-10
    assert out.node_count == 0


def test_bisect_iteration_budget():
    # width-100 bracket at eps 1e-16 stays within 18 log2(10) ~ 60 iterations
    params = SolverParams(d=2, omega=1.0, p=3.0, R=30.0, N=64)
    out = bisect(0, 100.0, 1e-16, params, step=5e-3, r_max=30.0)
    assert out.iterations <= 60
    assert out.expansions == 0
    # bracket widths halve (until floating-point exhaustion stops the loop)
    hist = out.bracket_history
    widths = [b - a for a, b, _, _ in hist]
    for w0, w1 in zip(widths, widths[1:]):
        assert w1 == pytest.approx(w0 / 2, rel=1e-12)


def test_bisect_monotone_bracketing():
    params = SolverParams(d=2, omega=1.0, p=3.0, R=30.0, N=64)
    target = 2
    out = bisect(target, 10.0, 1e-10, params, step=2e-3, r_max=30.0)
    for a, b, c, nc in out.bracket_history:
        assert a < c < b
        if nc > target:
            assert c >= out.alpha * (1 - 1e-9)
    assert out.node_count == target


def test_bisect_expansion():
    # b = 0.5 is below alpha_0: doubling must kick in
    out = bisect(0, 0.5, 1e-10, P1, step=2e-3, r_max=30.0)
    assert out.expansions >= 2
    assert abs(out.alpha - math.sqrt(2.0)) <= 1e-8


def test_bisect_expansion_failure():
    # f = 0 never produces sign changes, so no b is large enough
    with pytest.raises(BracketExpansionFailedError):
        bisect(0, 1.0, 1e-6, P1, step=0.05, r_max=5.0,
               nonlinearity=ZeroNonlinearity())


def test_alpha_monotone_in_k():
    params = SolverParams(d=2, omega=1.0, p=3.0, R=30.0, N=64)
    alphas = [bisect(k, 10.0, 1e-9, params, step=2e-3, r_max=60.0).alpha
              for k in range(6)]
    assert np.all(np.diff(alphas) > 0)


def test_rk4_order_linear_problem():
    # global error at r = 1 for the d = 1 linear problem scales as step^4
    errs = []
    steps = [1e-1, 5e-2, 2.5e-2, 1.25e-2]
    for s in steps:
        traj = integrate(1.0, P1, step=s, r_max=1.0,
                         nonlinearity=ZeroNonlinearity())
        errs.append(abs(traj.u[-1] - math.cosh(1.0)))
    slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
    assert 3.7 <= slope <= 4.3


def test_integrate_validation():
    with pytest.raises(ValueError):
        integrate(math.nan, P1, step=1e-3, r_max=1.0)
    with pytest.raises(ValueError):
        integrate(1.0, P1, step=-1e-3, r_max=1.0)
    with pytest.raises(ValueError):
        bisect(0, -1.0, 1e-10, P1)
    with pytest.raises(ValueError):
        bisect(-1, 1.0, 1e-10, P1)
