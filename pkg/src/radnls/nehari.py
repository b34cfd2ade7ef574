"""Discrete radial Laplacian, nodal Nehari projection and projected descent.

One descent iteration is

    v       = u + tau * (Lap u - omega*u + |u|^(p-1) u)
    u_next  = P v,

where Lap is the tridiagonal radial Laplacian with a Neumann center and a
Dirichlet wall, and P rescales each nodal component of v by the closed-form
factor ((N_k + omega L2_k) / L^{p+1}_k)^(1/(p-1)) that zeroes its Nehari
residual.  P is indexed by the requested sign-change count: surplus
components (excess nodes of an initial iterate, or round-off flickers at
the front of a zeroed tail) are discarded by zeroing everything beyond the
last kept component.  The iteration stops when the max-abs update drops
below the tolerance; losing a sign change aborts the run.

The iteration loop is compiled with numba (pure-python fallback with
identical semantics when unavailable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import GridFunction, PowerNonlinearity, RadialGrid, SolverParams, sample
from .quadrature import (
    NodalDecomposition,
    _radial_weights,
    decompose,
    functionals,
    grad_components,
    lp_components,
)

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False

__all__ = [
    "EmptyComponentError",
    "NodeCountChangedError",
    "MaxIterExceededError",
    "RadialLaplacian",
    "NehariRun",
    "build_laplacian",
    "project",
    "projection_factors",
    "descent_direction",
    "descend",
    "default_tau",
    "initial_state",
    "trim_divergent_tail",
]

ACTION_SLACK = 1.0e-8


class EmptyComponentError(ValueError):
    """A component's quadrature masses are too degenerate to project."""


class NehariRunError(RuntimeError):
    """Base for descent failures; carries the partial run in ``.run``."""

    def __init__(self, message, run):
        super().__init__(message)
        self.run = run


class NodeCountChangedError(NehariRunError):
    """A gradient step lost one of the requested sign changes."""


class MaxIterExceededError(NehariRunError):
    """The stopping criterion was not reached within max_iter steps."""


@dataclass(frozen=True)
class RadialLaplacian:
    """Tridiagonal radial Laplacian on length-N vectors (Dirichlet at R).

    Row 1 is the centered stencil at r = 0 under u'(0) = 0, i.e.
    2 (u_2 - u_1) / h^2; interior rows combine the second difference with
    the (d-1)/r drift; the superdiagonal stops at row N-1 (wall).
    """

    diag: np.ndarray
    sub: np.ndarray
    sup: np.ndarray
    h: float
    d: int

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.sup * v[1:]
        out[1:] += self.sub * v[:-1]
        return out

    __call__ = apply

    def as_matrix(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.sub, -1) + np.diag(self.sup, 1)


def build_laplacian(params: SolverParams, grid: RadialGrid | None = None) -> RadialLaplacian:
    """Assemble the radial finite-difference Laplacian for the given grid."""
    if grid is None:
        grid = params.grid()
    h = grid.h
    n = grid.N
    r = grid.r
    d = params.d
    diag = np.full(n, -2.0 / h**2)
    sub = np.full(n - 1, 1.0 / h**2)
    sup = np.full(n - 1, 1.0 / h**2)
    if d > 1:
        drift = (d - 1) / (2.0 * h * r[1:])
        sub -= drift
        sup[1:] += drift[:-1]
    sup[0] = 2.0 / h**2
    for arr in (diag, sub, sup):
        arr.setflags(write=False)
    return RadialLaplacian(diag=diag, sub=sub, sup=sup, h=h, d=d)


def projection_factors(
    u: GridFunction, dec: NodalDecomposition, params: SolverParams
) -> np.ndarray:
    """Per-component scalings t_k = ((N_k + omega L2_k)/L^{p+1}_k)^(1/(p-1)).

    Scaling component k by t_k zeroes its residual J_k exactly: the
    component functionals are homogeneous of degrees 2 and p+1 under
    scaling of that component with the node radii held fixed.
    """
    grad = grad_components(u, dec, params.d)
    l2 = lp_components(u, dec, 2.0, params.d)
    lp1 = lp_components(u, dec, params.p + 1.0, params.d)
    quad = grad + params.omega * l2
    if np.any(lp1 <= 0.0):
        k = int(np.nonzero(lp1 <= 0.0)[0][0])
        raise EmptyComponentError(f"component {k} has L^(p+1) mass {lp1[k]} <= 0")
    if np.any(quad <= 0.0):
        k = int(np.nonzero(quad <= 0.0)[0][0])
        raise EmptyComponentError(f"component {k} has quadratic energy {quad[k]} <= 0")
    return (quad / lp1) ** (1.0 / (params.p - 1.0))


def _truncate_components(values: np.ndarray, dec: NodalDecomposition, n_nodes: int):
    """Zero everything beyond component n_nodes (the projection's subscript)."""
    cut = int(dec.sign_change_left[n_nodes]) + 1
    dropped = float(np.max(np.abs(values[cut:])))
    out = values.copy()
    out[cut:] = 0.0
    return out, dropped


def project(
    u: GridFunction,
    params: SolverParams,
    dec: NodalDecomposition | None = None,
    n_nodes: int | None = None,
) -> GridFunction:
    """Rescale each nodal component onto the discrete nodal Nehari set.

    The decomposition (sign-change indices and node radii) is taken from u
    when not supplied and is left untouched by the scaling; the residuals
    of the result evaluated with that same decomposition vanish to machine
    precision, and re-projecting returns the input unchanged.  (Evaluating
    against a freshly recomputed decomposition moves the interpolated node
    radii when neighbouring factors differ, so residuals are only exact in
    the decomposition frame the projection acted in.)

    With ``n_nodes`` the operator acts as the node-count-indexed
    projection: components beyond the first n_nodes+1 are zeroed before
    scaling (how surplus sign changes of an initial iterate are
    discarded); fewer sign changes than requested raise ValueError.
    """
    if dec is None:
        dec = decompose(u)
    if n_nodes is not None and dec.n_nodes != n_nodes:
        if dec.n_nodes < n_nodes:
            raise ValueError(
                f"cannot project onto {n_nodes} nodes: only {dec.n_nodes} "
                "sign changes present"
            )
        values, _ = _truncate_components(u.values, dec, n_nodes)
        u = u.with_values(values)
        dec = decompose(u)
    t = projection_factors(u, dec, params)
    if np.all(t == 1.0):
        return u
    widths = dec.comp_stop - dec.comp_start
    return u.with_values(u.values * np.repeat(t, widths))


def descent_direction(
    u: GridFunction,
    params: SolverParams,
    lap: RadialLaplacian | None = None,
) -> GridFunction:
    """Negative action gradient g = Lap u - omega*u + |u|^(p-1) u."""
    if lap is None:
        lap = build_laplacian(params, u.grid)
    f = PowerNonlinearity(params.p)
    v = u.values
    return u.with_values(lap.apply(v) - params.omega * v + f.f(v))


def default_tau(params: SolverParams) -> float:
    """Default descent step 0.45 h^2, just inside the explicit stability edge.

    At exactly 0.5 h^2 the top Laplacian mode is undamped (amplification
    factor -1) and the iteration settles into a limit cycle instead of
    converging; backing off to 0.45 h^2 damps it at 0.8 per step.
    """
    return 0.45 * params.h**2


# --------------------------------------------------------------------------
# compiled iteration loop


def _descent_loop_py(
    u, v, g, w, r, h, R, d, omega, p,
    diag, sub, sup, literal,
    tau, tau_default, tau_floor, eps, prev_action, best_action, action_slack,
    max_steps, offset, stride, target,
    m_idx, rho, quad, lp1, tk,
    crit_rec, act_rec, res_rec, rho_rec,
):
    """Run up to max_steps projected-descent iterations in place on u.

    Returns (status, steps, nrec, tau, action, best_action, ntrunc,
    maxdrop, nviol) with status 0 = converged, 1 = step budget spent,
    2 = sign change lost, 3 = degenerate component.  Iterations whose
    global index (offset + local step) is divisible by stride are recorded
    into the *_rec buffers; the converging iteration is always recorded.
    """
    n = u.shape[0]
    inv2h = 1.0 / (2.0 * h)
    pexp = p + 1.0
    acoef = 0.5 - 1.0 / pexp
    pinv = 1.0 / (p - 1.0)
    steps = 0
    nrec = 0
    ntrunc = 0
    maxdrop = 0.0
    calm = 0
    nviol = 0

    def absp1(x):
        if p == 3.0:
            x2 = x * x
            return x2 * x2
        if p == 2.0:
            return x * x * abs(x)
        return abs(x) ** pexp

    while steps < max_steps:
        for i in range(n):
            x = u[i]
            if p == 3.0:
                fx = x * x * x
            elif p == 2.0:
                fx = abs(x) * x
            else:
                fx = abs(x) ** (p - 1.0) * x
            lapu = diag[i] * x
            if i > 0:
                lapu += sub[i - 1] * u[i - 1]
            if i < n - 1:
                lapu += sup[i] * u[i + 1]
            if literal:
                g[i] = -(lapu + fx)
            else:
                g[i] = lapu - omega * x + fx

        for i in range(n):
            v[i] = u[i] + tau * g[i]

        # sign changes; exact zeros carry the running sign
        K = 0
        run_s = 0
        for i in range(n):
            si = 0
            if v[i] > 0.0:
                si = 1
            elif v[i] < 0.0:
                si = -1
            if si != 0:
                if run_s != 0 and si != run_s:
                    if K <= target:
                        m_idx[K] = i - 1
                    K += 1
                run_s = si
        if K < target:
            return (2, steps, nrec, tau, prev_action, best_action, ntrunc, maxdrop, nviol)
        if K > target:
            cut = m_idx[target] + 1
            drop = 0.0
            for i in range(cut, n):
                ai = abs(v[i])
                if ai > drop:
                    drop = ai
                v[i] = 0.0
            if drop > maxdrop:
                maxdrop = drop
            ntrunc += 1

        for t in range(target):
            mm = m_idx[t]
            rho[t] = (r[mm] * v[mm + 1] - r[mm + 1] * v[mm]) / (v[mm + 1] - v[mm])

        act = 0.0
        resid = 0.0
        for k in range(target + 1):
            a = 0 if k == 0 else m_idx[k - 1] + 1
            b = m_idx[k] + 1 if k < target else n
            has_l = k >= 1
            has_r = k < target
            rho_l = rho[k - 1] if has_l else 0.0
            rho_r = rho[k] if has_r else R

            s2 = 0.0
            sp = 0.0
            for i in range(a, b):
                x = v[i]
                wi = w[i]
                s2 += x * x * wi
                sp += absp1(x) * wi
            xa = v[a]
            xb = v[b - 1]
            ca = ((r[a] - rho_l) - h) / 2.0
            cb = ((rho_r - r[b - 1]) - h) / 2.0
            l2 = h * s2 + ca * xa * xa * w[a] + cb * xb * xb * w[b - 1]
            lp = h * sp + ca * absp1(xa) * w[a] + cb * absp1(xb) * w[b - 1]

            # node-anchored edge slopes; the anchored form degenerates when
            # the interpolated node rounds exactly onto a grid point, where
            # the plain difference quotient has the identical value
            gap_l = r[a] - rho_l if has_l else 0.0
            gap_r = rho_r - r[b - 1] if has_r else 0.0
            sl = 0.0
            sr = 0.0
            vL = 0.0
            vR = 0.0
            if has_l:
                sl = v[a] / gap_l if gap_l > 0.0 else (v[a] - v[a - 1]) / h
                vL = sl * (gap_l - h)
            if has_r:
                sr = -v[b - 1] / gap_r if gap_r > 0.0 else (v[b] - v[b - 1]) / h
                vR = sr * (h - gap_r)

            i0 = a if has_l else 1
            i1 = b - 1 if has_r else n - 2
            sgrad = 0.0
            for i in range(i0, i1 + 1):
                rt = v[i + 1] if i + 1 < n else 0.0
                cdv = (rt - v[i - 1]) * inv2h
                sgrad += cdv * cdv * w[i]
            gN = h * sgrad

            cdA = 0.0
            if has_l:
                if a + 1 >= b and has_r:
                    rA = vR
                elif a + 1 < n:
                    rA = v[a + 1]
                else:
                    rA = 0.0
                cdA = (rA - vL) * inv2h
            cdB = 0.0
            if has_r and b - 1 > 0:
                lB = vL if (b - 2 < a and has_l) else v[b - 2]
                cdB = (vR - lB) * inv2h

            if has_l and i0 <= a <= i1:
                rt = v[a + 1] if a + 1 < n else 0.0
                cdraw = (rt - v[a - 1]) * inv2h
                gN += h * (cdA * cdA - cdraw * cdraw) * w[a]
            if has_r and i0 <= b - 1 <= i1 and (b - 1 != a or not has_l):
                rt = v[b] if b < n else 0.0
                cdraw = (rt - v[b - 2]) * inv2h
                gN += h * (cdB * cdB - cdraw * cdraw) * w[b - 1]

            if has_l:
                rw = 1.0 if d == 1 else rho_l ** (d - 1)
                gN += ((gap_l - h) / 2.0) * cdA * cdA * w[a]
                gN += (gap_l / 2.0) * sl * sl * rw
            if has_r:
                rw = 1.0 if d == 1 else rho_r ** (d - 1)
                gN += ((gap_r - h) / 2.0) * cdB * cdB * w[b - 1]
                gN += (gap_r / 2.0) * sr * sr * rw
            else:
                vv = v[n - 2] if n - 2 >= a else vL
                gN += (h / 2.0) * (vv * inv2h) * (vv * inv2h) * w[n - 1]

            qk = gN + omega * l2
            if lp <= 0.0 or qk <= 0.0:
                return (3, steps, nrec, tau, prev_action, best_action, ntrunc, maxdrop, nviol)
            quad[k] = qk
            lp1[k] = lp
            rk = abs(qk - lp)
            if rk > resid:
                resid = rk
            if p == 3.0:
                t_k = math.sqrt(qk / lp)
                t_p1 = (t_k * t_k) * (t_k * t_k)
            else:
                t_k = (qk / lp) ** pinv
                t_p1 = t_k ** pexp
            tk[k] = t_k
            act += t_p1 * lp
        act *= acoef

        # slack-level increases are counted but tolerated: the quadrature
        # action jumps by O(h^2) whenever a node crosses a grid cell, and
        # reacting to those with step reduction only prolongs the crossing.
        # Sustained ascent above the best action reached signals a genuine
        # instability: tau is halved (kept above the floor) and restored
        # toward its default after a long calm streak.
        if act > prev_action + action_slack:
            nviol += 1
        if act < best_action:
            best_action = act
        if act > best_action + 0.01 * (1.0 + abs(best_action)):
            if tau > tau_floor:
                tau = max(0.5 * tau, tau_floor)
            calm = 0
        else:
            calm += 1
            if calm >= 256 and tau < tau_default:
                tau = min(2.0 * tau, tau_default)
                calm = 0

        crit = 0.0
        for k in range(target + 1):
            a = 0 if k == 0 else m_idx[k - 1] + 1
            b = m_idx[k] + 1 if k < target else n
            t_k = tk[k]
            for i in range(a, b):
                un = v[i] * t_k
                c = abs(un - u[i])
                if c > crit:
                    crit = c
                u[i] = un

        prev_action = act
        steps += 1
        done = crit <= eps
        if (offset + steps) % stride == 0 or done:
            crit_rec[nrec] = crit
            act_rec[nrec] = act
            res_rec[nrec] = resid
            for t in range(target):
                rho_rec[nrec, t] = rho[t]
            nrec += 1
        if done:
            return (0, steps, nrec, tau, prev_action, best_action, ntrunc, maxdrop, nviol)
    return (1, steps, nrec, tau, prev_action, best_action, ntrunc, maxdrop, nviol)


if _HAVE_NUMBA:
    _descent_loop = numba.njit(cache=True)(_descent_loop_py)
else:  # pragma: no cover
    _descent_loop = _descent_loop_py

_CHUNK = 2_000_000


@dataclass(frozen=True)
class NehariRun:
    """Summary of one projected-descent run.

    crit_history[j] is the max-abs update of recorded iteration j;
    action_history carries the initial action followed by the action after
    each recorded iteration; residual_history the largest nodal Nehari
    residual of the gradient-stepped vector that the iteration projected
    away.  node_position_history holds the interpolated node radii per
    recorded iteration (initial radii first).  With history_stride > 1
    only every stride-th iteration is recorded (the final one always is).
    truncations counts gradient steps whose surplus sign changes were
    discarded; max_truncated is the largest magnitude so zeroed.
    """

    final: GridFunction
    iterations: int
    crit_history: np.ndarray
    action_history: np.ndarray
    residual_history: np.ndarray
    node_position_history: np.ndarray = field(repr=False)
    n_nodes: int = 0
    tau_final: float = 0.0
    converged: bool = True
    truncations: int = 0
    max_truncated: float = 0.0
    history_stride: int = 1
    action_violations: int = 0


def descend(
    u0: GridFunction,
    params: SolverParams,
    tau: float | None = None,
    epsilon: float = 1.0e-10,
    max_iter: int = 200_000_000,
    literal_update: bool = False,
    history_stride: int = 1,
    action_slack: float = ACTION_SLACK,
) -> NehariRun:
    """Projected gradient descent from u0 (already on the nodal Nehari set).

    tau defaults to 0.45 h^2 and is halved (down to 1e-6 h^2) whenever a
    step would raise the action by more than 1e-8.  Surplus sign changes
    of a gradient-stepped vector (front noise creeping through a zeroed
    tail) are discarded by the node-count-indexed projection, exactly as
    excess nodes of an initial iterate are.  A genuine loss of sign
    changes aborts with NodeCountChangedError, a spent budget with
    MaxIterExceededError; both carry the partial history.

    literal_update applies the update v = u - tau*(Lap u + |u|^(p-1) u)
    exactly as the matrix form of the descent algorithm prints it (for
    comparison only; it ascends the action).
    """
    grid = u0.grid
    if tau is None:
        tau = default_tau(params)
    if not (tau > 0 and epsilon > 0):
        raise ValueError("tau and epsilon must be positive")
    if history_stride < 1:
        raise ValueError("history_stride must be >= 1")
    tau0 = tau
    tau_floor = 1.0e-6 * params.h**2
    lap = build_laplacian(params, grid)

    dec0 = decompose(u0)
    target = dec0.n_nodes
    fun0 = functionals(u0, dec0, params)
    if np.any(fun0.lp1 <= 0.0):
        raise EmptyComponentError("initial iterate has an empty component")

    n = grid.N
    u = u0.values.copy()
    v = np.empty(n)
    g = np.empty(n)
    w = _radial_weights(grid.r, params.d)
    m_idx = np.empty(target + 2, dtype=np.int64)
    rho = np.empty(max(target, 1))
    quad = np.empty(target + 1)
    lp1 = np.empty(target + 1)
    tk = np.empty(target + 1)

    crit_hist = []
    act_hist = []
    res_hist = []
    rho_hist = [dec0.node_positions.copy()]
    action = fun0.action
    best = fun0.action
    steps_total = 0
    nviol_total = 0
    ntrunc_total = 0
    maxdrop_total = 0.0
    status = 1
    while steps_total < max_iter and status == 1:
        steps_chunk = int(min(_CHUNK, max_iter - steps_total))
        cap = steps_chunk // history_stride + 2
        crit_rec = np.empty(cap)
        act_rec = np.empty(cap)
        res_rec = np.empty(cap)
        rho_rec = np.empty((cap, target))
        status, steps, nrec, tau, action, best, ntrunc, maxdrop, nviol = _descent_loop(
            u, v, g, w, grid.r, grid.h, grid.R, params.d, params.omega, params.p,
            lap.diag, lap.sub, lap.sup, literal_update,
            tau, tau0, tau_floor, epsilon, action, best, action_slack,
            steps_chunk, steps_total, history_stride, target,
            m_idx, rho, quad, lp1, tk,
            crit_rec, act_rec, res_rec, rho_rec,
        )
        steps_total += steps
        nviol_total += nviol
        ntrunc_total += ntrunc
        maxdrop_total = max(maxdrop_total, maxdrop)
        crit_hist.append(crit_rec[:nrec].copy())
        act_hist.append(act_rec[:nrec].copy())
        res_hist.append(res_rec[:nrec].copy())
        rho_hist.append(rho_rec[:nrec].copy())

    run = NehariRun(
        final=u0.with_values(u),
        iterations=steps_total,
        crit_history=np.concatenate(crit_hist) if crit_hist else np.empty(0),
        action_history=np.concatenate([[fun0.action]] + act_hist),
        residual_history=np.concatenate(res_hist) if res_hist else np.empty(0),
        node_position_history=np.vstack(rho_hist),
        n_nodes=target,
        tau_final=tau,
        converged=status == 0,
        truncations=ntrunc_total,
        max_truncated=maxdrop_total,
        history_stride=history_stride,
        action_violations=nviol_total,
    )
    if status == 0:
        return run
    if status == 2:
        raise NodeCountChangedError(
            f"a sign change of the requested {target} was lost at iteration "
            f"{steps_total}", run,
        )
    if status == 3:
        raise EmptyComponentError(
            f"degenerate component at iteration {steps_total}"
        )
    raise MaxIterExceededError(
        f"no convergence within {max_iter} iterations "
        f"(last crit {run.crit_history[-1] if run.crit_history.size else math.nan:g})",
        run,
    )


def trim_divergent_tail(
    values: np.ndarray,
    n_nodes: int,
    growth: float = 3.0,
    r: np.ndarray | None = None,
    omega: float | None = None,
) -> np.ndarray:
    """Repair a trailing segment where |u| turns from decay to growth.

    Shooting trajectories blow up past the radius where the amplitude error
    takes over.  Everything after the post-last-node minimum of |u| is
    replaced whenever the terminal magnitude exceeds ``growth`` times that
    minimum: by the exponential continuation u(r_min) e^{-sqrt(omega)(r -
    r_min)} when the radii and frequency are supplied (sign preserved, no
    zero region left behind), by zeros otherwise.  Used to make shooting
    output usable as a descent iterate.
    """
    v = np.asarray(values, dtype=float).copy()
    sign_changes = np.nonzero(v[:-1] * v[1:] < 0.0)[0]
    j0 = int(sign_changes[n_nodes - 1]) + 1 if n_nodes > 0 and sign_changes.size >= n_nodes else 0
    tail = np.abs(v[j0:])
    if tail.size < 3:
        return v
    i_min = j0 + int(np.argmin(tail))
    floor = abs(v[i_min])
    if abs(v[-1]) > growth * max(floor, 1e-300) and i_min + 1 < v.size:
        if r is not None and omega is not None and floor > 0.0:
            decay = np.exp(-math.sqrt(omega) * (r[i_min + 1 :] - r[i_min]))
            v[i_min + 1 :] = v[i_min] * decay
        else:
            v[i_min + 1 :] = 0.0
    return v


def initial_state(
    params: SolverParams,
    n_nodes: int,
    profile=None,
    grid: RadialGrid | None = None,
) -> GridFunction:
    """Projected initial iterate with exactly n_nodes sign changes.

    The default profile cos(r) exp(-r^2/30) oscillates with slowly decaying
    amplitude; surplus sign changes are discarded by the node-count-indexed
    projection.  Supply ``profile`` (a callable of r) when more nodes are
    needed than the default carries on [0, R].
    """
    if grid is None:
        grid = params.grid()
    if profile is None:
        profile = lambda r: math.cos(r) * math.exp(-(r**2) / 30.0)
    u = sample(profile, grid)
    dec = decompose(u)
    if dec.n_nodes < n_nodes:
        raise ValueError(
            f"initial profile has {dec.n_nodes} sign changes on [0, {grid.R}], "
            f"fewer than the requested {n_nodes}"
        )
    return project(u, params, dec=dec, n_nodes=n_nodes)
