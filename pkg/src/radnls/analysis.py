"""Convergence studies, cross-method gaps, curve fits and tail asymptotics.

The drivers here turn the two solvers into grid states
(`shooting_state`, `nehari_state`) and reproduce the empirical studies:
grid-refinement errors against a nested reference, the gap between the two
methods, the amplitude law alpha_k ~ a + b sqrt(k), the per-node position
law 1/sqrt(a k + b), extrema of the oscillation train and the comparison of
the final oscillation with the one-dimensional soliton sqrt(2) sech(r).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize, stats

from .core import GridFunction, SolverParams, make_grid
from .nehari import (
    NehariRun,
    default_tau,
    descend,
    initial_state,
    project,
    trim_divergent_tail,
)
from .quadrature import decompose
from .shooting import ShootingOutcome, Trajectory, bisect

__all__ = [
    "NonNestedGridsError",
    "RankDeficientError",
    "ConvergenceReport",
    "FitResult",
    "shooting_state",
    "nehari_state",
    "combined_state",
    "train_state",
    "nehari_study_tolerance",
    "grid_errors",
    "convergence_study",
    "cross_method_gap",
    "amplitude_sweep",
    "trajectory_node_radii",
    "fit_amplitudes",
    "fit_node_positions",
    "extrema_profile",
    "sech_tail_compare",
]


class NonNestedGridsError(ValueError):
    """Grid sizes do not divide the reference size."""


class RankDeficientError(ValueError):
    """The least-squares design matrix is rank deficient."""


# --------------------------------------------------------------------------
# solver drivers


def _force_node_count(values: np.ndarray, n_nodes: int) -> np.ndarray:
    """Zero trailing samples until exactly n_nodes sign changes remain."""
    v = values.copy()
    changes = np.nonzero(v[:-1] * v[1:] < 0.0)[0]
    if changes.size < n_nodes:
        raise ValueError(
            f"state carries only {changes.size} sign changes, need {n_nodes}"
        )
    if changes.size > n_nodes:
        v[int(changes[n_nodes]) + 1 :] = 0.0
    return v


def shooting_state(
    params: SolverParams,
    n_nodes: int,
    rk_step: float | str | None = None,
    bisect_eps: float = 1.0e-12,
    b0: float = 10.0,
    r_max: float | None = None,
    trim: bool = False,
    outcome: ShootingOutcome | None = None,
) -> tuple[GridFunction, ShootingOutcome]:
    """Bisect the amplitude and sample the trajectory on the grid.

    rk_step "grid" ties the RK4 step to the grid spacing R/N (the setting
    used by the refinement studies); None picks the fine default.  With
    ``trim`` the divergent tail region, where the amplitude error has taken
    over, is zeroed, which makes the state a valid descent iterate.
    """
    grid = params.grid()
    step = params.h if rk_step == "grid" else rk_step
    if outcome is None:
        outcome = bisect(
            n_nodes, b0, bisect_eps, params, step=step, r_max=r_max
        )
    traj = outcome.trajectory
    vals = np.interp(grid.r, traj.r, traj.u)
    if trim:
        vals = trim_divergent_tail(vals, n_nodes, r=grid.r, omega=params.omega)
        vals = _force_node_count(vals, n_nodes)
    return GridFunction(vals, grid), outcome


def nehari_study_tolerance(params: SolverParams, factor: float = 0.02) -> float:
    """Stopping tolerance leaving an O(factor * h^2) distance to the fixed point.

    The max-abs update scales with tau times the residual gradient, so the
    threshold must shrink with both tau and the target accuracy h^2 for
    refinement studies to see the discretization error rather than the
    unconverged remainder.
    """
    return max(5.0e-15, factor * default_tau(params) * params.h**2)


def nehari_state(
    params: SolverParams,
    n_nodes: int,
    init: str | GridFunction = "combined",
    tau: float | None = None,
    epsilon: float = 1.0e-10,
    max_iter: int = 50_000_000,
    rk_step: float | None = None,
    bisect_eps: float = 1.0e-12,
    b0: float = 10.0,
    r_max: float | None = None,
) -> NehariRun:
    """Projected gradient descent to the n_nodes bound state.

    init: "combined" starts from the (trimmed, projected) shooting state,
    "default" from the oscillating Gaussian profile, or pass a GridFunction
    with the right sign-change count directly.
    """
    if isinstance(init, GridFunction):
        u0 = project(init.with_values(_force_node_count(init.values, n_nodes)), params)
    elif init == "combined":
        state, _ = shooting_state(
            params, n_nodes, rk_step=rk_step, bisect_eps=bisect_eps,
            b0=b0, r_max=r_max, trim=True,
        )
        u0 = project(state, params)
    elif init == "default":
        u0 = initial_state(params, n_nodes)
    else:
        raise ValueError(f"unknown init {init!r}")
    return descend(u0, params, tau=tau, epsilon=epsilon, max_iter=max_iter)


def combined_state(
    params: SolverParams,
    n_nodes: int,
    tau: float | None = None,
    epsilon: float = 1.0e-10,
    max_iter: int = 50_000_000,
    rk_step: float | None = None,
    bisect_eps: float = 1.0e-12,
    b0: float = 10.0,
    r_max: float | None = None,
) -> tuple[ShootingOutcome, NehariRun]:
    """Shooting approximation refined by the Nehari descent."""
    state, outcome = shooting_state(
        params, n_nodes, rk_step=rk_step, bisect_eps=bisect_eps,
        b0=b0, r_max=r_max, trim=True,
    )
    run = descend(project(state, params), params, tau=tau, epsilon=epsilon,
                  max_iter=max_iter)
    return outcome, run


def train_state(
    params: SolverParams,
    n_nodes: int,
    epsilon: float = 1.0e-9,
    stage_epsilon: float = 1.0e-6,
    start_nodes: int = 5,
    history_stride: int = 100,
    max_iter: int = 200_000_000,
) -> NehariRun:
    """Bound state with many sign changes, built by node-count continuation.

    Shooting trajectories lose accuracy past the error-propagation radius,
    so for large node counts no direct initial iterate with the right far
    structure exists.  Starting from the combined state with
    ``start_nodes`` sign changes, one oscillation is appended per stage: a
    soliton-shaped hump of amplitude sqrt(2) and alternating sign is added
    one inter-node spacing beyond the last node, the result is reprojected
    (surplus far crossings are truncated) and redescended.  Intermediate
    stages run at the looser ``stage_epsilon``; the final stage at
    ``epsilon``.
    """
    k0 = min(start_nodes, n_nodes)
    state, _ = shooting_state(params, k0, bisect_eps=1.0e-12, trim=True)
    run = descend(
        project(state, params), params,
        epsilon=stage_epsilon if n_nodes > k0 else epsilon,
        history_stride=history_stride, max_iter=max_iter,
    )
    grid = params.grid()
    for k in range(k0 + 1, n_nodes + 1):
        u = run.final.values
        dec = decompose(run.final)
        rho = dec.node_positions
        if rho.size >= 2:
            spacing = max(2.5, float(rho[-1] - rho[-2]))
        else:
            spacing = 3.0
        center = float(rho[-1]) + spacing if rho.size else spacing
        if center > grid.R - 3.0:
            raise ValueError(
                f"domain R = {grid.R} too small for {n_nodes} oscillations "
                f"(ran out of room at {k - 1})"
            )
        last_sign = math.copysign(1.0, u[int(dec.comp_start[-1])])
        hump = -last_sign * math.sqrt(2.0) / np.cosh(grid.r - center)
        u0 = GridFunction(u + hump, grid)
        u0 = project(u0, params, n_nodes=k)
        run = descend(
            u0, params,
            epsilon=epsilon if k == n_nodes else stage_epsilon,
            history_stride=history_stride, max_iter=max_iter,
        )
    return run


# --------------------------------------------------------------------------
# refinement errors


def grid_errors(u: GridFunction, u_ref: GridFunction) -> tuple[float, float]:
    """(e1, einf) between a state and a reference on a nested finer grid.

    The reference is restricted to the coarse grid by exact index
    subsampling, so no interpolation error enters; e1 carries the coarse
    cell width h as the L^1 weight.
    """
    if u.grid.R != u_ref.grid.R:
        raise NonNestedGridsError("states live on different domains")
    if u_ref.grid.N % u.grid.N:
        raise NonNestedGridsError(
            f"reference N = {u_ref.grid.N} is not a multiple of N = {u.grid.N}"
        )
    stride = u_ref.grid.N // u.grid.N
    diff = u.values - u_ref.values[::stride]
    return float(u.grid.h * np.sum(np.abs(diff))), float(np.max(np.abs(diff)))


@dataclass(frozen=True)
class ConvergenceReport:
    """Refinement errors of one method against a nested reference grid."""

    method: str
    n_nodes: int
    Ns: tuple
    hs: tuple
    e1: np.ndarray
    einf: np.ndarray
    slope_e1: float
    slope_einf: float
    N_ref: int


def _loglog_slope(hs, errs) -> float:
    errs = np.asarray(errs, dtype=float)
    if np.any(errs <= 0):
        return math.nan
    return float(np.polyfit(np.log(np.asarray(hs)), np.log(errs), 1)[0])


def _study_state(task) -> np.ndarray:
    """One per-N solve of a refinement study (module level for pickling)."""
    kind, params, n_nodes, opts = task
    if kind == "shooting":
        state, _ = shooting_state(
            params, n_nodes, rk_step="grid",
            bisect_eps=opts["bisect_eps"], b0=opts["b0"], trim=opts["trim"],
        )
        return state.values
    u0 = GridFunction(opts["u0"], params.grid())
    run = descend(
        project(u0, params), params,
        epsilon=nehari_study_tolerance(params, opts["crit_factor"]),
        max_iter=opts["max_iter"],
    )
    return run.final.values


def _check_nested(N_list, N_ref):
    Ns = sorted(set(int(N) for N in N_list))
    for N in Ns:
        if N >= N_ref:
            raise NonNestedGridsError(f"tested N = {N} must stay below N_ref = {N_ref}")
        if N_ref % N:
            raise NonNestedGridsError(f"N_ref = {N_ref} is not a multiple of N = {N}")
    return Ns


def convergence_study(
    method: str,
    params: SolverParams,
    N_list,
    N_ref: int,
    n_nodes: int,
    workers: int = 1,
    bisect_eps: float = 1.0e-16,
    b0: float = 10.0,
    trim_shooting: bool = True,
    crit_factor: float = 0.02,
    max_iter: int = 200_000_000,
    ref_warm_start: bool = True,
) -> ConvergenceReport:
    """Grid-refinement errors of one method on nested grids.

    Shooting runs tie the RK4 step to each grid's spacing; Nehari runs all
    start from the same fine shooting trajectory sampled per grid, with the
    reference optionally warm-started from the finest tested state (the
    fixed point does not depend on the iterate path).
    """
    if method not in ("shooting", "nehari"):
        raise ValueError(f"unknown method {method!r}")
    Ns = _check_nested(N_list, N_ref)

    if method == "shooting":
        opts = {"bisect_eps": bisect_eps, "b0": b0, "trim": trim_shooting}
        tasks = [("shooting", replace(params, N=N), n_nodes, opts)
                 for N in Ns + [N_ref]]
    else:
        fine_state, outcome = shooting_state(
            replace(params, N=N_ref), n_nodes, bisect_eps=1.0e-12, b0=b0, trim=True
        )
        traj = outcome.trajectory
        tasks = []
        for N in Ns + [N_ref]:
            p_N = replace(params, N=N)
            g_N = p_N.grid()
            vals = np.interp(g_N.r, traj.r, traj.u)
            vals = trim_divergent_tail(vals, n_nodes, r=g_N.r, omega=params.omega)
            vals = _force_node_count(vals, n_nodes)
            tasks.append(("nehari", p_N, n_nodes,
                          {"u0": vals, "crit_factor": crit_factor,
                           "max_iter": max_iter}))

    ref_task = tasks.pop()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            states = list(pool.map(_study_state, tasks))
    else:
        states = [_study_state(t) for t in tasks]

    if method == "nehari" and ref_warm_start:
        finest = states[-1]
        grid_ref = replace(params, N=N_ref).grid()
        grid_fin = replace(params, N=Ns[-1]).grid()
        warm = np.interp(grid_ref.r, grid_fin.r, finest)
        ref_task[3]["u0"] = _force_node_count(warm, n_nodes)
    ref_vals = _study_state(ref_task)
    ref = GridFunction(ref_vals, replace(params, N=N_ref).grid())

    e1, einf = [], []
    for N, vals in zip(Ns, states):
        a, b = grid_errors(GridFunction(vals, replace(params, N=N).grid()), ref)
        e1.append(a)
        einf.append(b)
    hs = tuple(params.R / N for N in Ns)
    return ConvergenceReport(
        method=method,
        n_nodes=n_nodes,
        Ns=tuple(Ns),
        hs=hs,
        e1=np.asarray(e1),
        einf=np.asarray(einf),
        slope_e1=_loglog_slope(hs, e1),
        slope_einf=_loglog_slope(hs, einf),
        N_ref=int(N_ref),
    )


def cross_method_gap(
    params: SolverParams,
    N_list,
    n_nodes: int,
    workers: int = 1,
    bisect_eps: float = 1.0e-16,
    b0: float = 10.0,
    crit_factor: float = 0.02,
    max_iter: int = 200_000_000,
):
    """Per-N gaps (E1, Einf) between the Nehari and shooting states.

    Returns a list of rows (N, E1, Einf); both solvers run under the same
    per-N protocol as the refinement studies.
    """
    Ns = sorted(set(int(N) for N in N_list))
    fine_state, outcome = shooting_state(
        replace(params, N=max(Ns)), n_nodes, bisect_eps=1.0e-12, b0=b0, trim=True
    )
    traj = outcome.trajectory
    tasks = []
    for N in Ns:
        p_N = replace(params, N=N)
        tasks.append(("shooting", p_N, n_nodes,
                      {"bisect_eps": bisect_eps, "b0": b0, "trim": True}))
        g_N = p_N.grid()
        vals = np.interp(g_N.r, traj.r, traj.u)
        vals = trim_divergent_tail(vals, n_nodes, r=g_N.r, omega=params.omega)
        vals = _force_node_count(vals, n_nodes)
        tasks.append(("nehari", p_N, n_nodes,
                      {"u0": vals, "crit_factor": crit_factor, "max_iter": max_iter}))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            states = list(pool.map(_study_state, tasks))
    else:
        states = [_study_state(t) for t in tasks]
    rows = []
    for i, N in enumerate(Ns):
        h = params.R / N
        diff = states[2 * i + 1] - states[2 * i]
        rows.append((N, float(h * np.sum(np.abs(diff))), float(np.max(np.abs(diff)))))
    return rows


# --------------------------------------------------------------------------
# empirical laws


def amplitude_sweep(
    params: SolverParams,
    k_max: int,
    r_max: float,
    rk_step: float = 1.0e-3,
    bisect_eps: float = 1.0e-12,
    b0: float = 10.0,
) -> list[ShootingOutcome]:
    """Shooting amplitudes alpha_k for k = 0..k_max (increasing in k)."""
    outcomes = []
    b = b0
    for k in range(k_max + 1):
        out = bisect(k, b, bisect_eps, params, step=rk_step, r_max=r_max)
        outcomes.append(out)
        b = out.alpha + 3.0
    return outcomes


def trajectory_node_radii(traj: Trajectory) -> np.ndarray:
    """Interpolated radii of the trajectory's sign changes."""
    u, r = traj.u, traj.r
    m = np.nonzero(u[:-1] * u[1:] < 0.0)[0]
    return (r[m] * u[m + 1] - r[m + 1] * u[m]) / (u[m + 1] - u[m])


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit a + b*x with 95% confidence half-widths."""

    a: float
    b: float
    rss: float
    conf_a: float
    conf_b: float
    n: int

    @property
    def bounds_a(self):
        return (self.a - self.conf_a, self.a + self.conf_a)

    @property
    def bounds_b(self):
        return (self.b - self.conf_b, self.b + self.conf_b)


def _linear_fit(x: np.ndarray, y: np.ndarray) -> FitResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3:
        raise RankDeficientError(f"need at least 3 points, got {n}")
    X = np.column_stack([np.ones(n), x])
    if np.linalg.matrix_rank(X) < 2:
        raise RankDeficientError("design matrix is rank deficient (constant inputs)")
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    rss = float(resid @ resid)
    sigma2 = rss / (n - 2)
    cov = sigma2 * np.linalg.inv(X.T @ X)
    tq = float(stats.t.ppf(0.975, n - 2))
    return FitResult(
        a=float(beta[0]),
        b=float(beta[1]),
        rss=rss,
        conf_a=tq * math.sqrt(max(cov[0, 0], 0.0)),
        conf_b=tq * math.sqrt(max(cov[1, 1], 0.0)),
        n=n,
    )


def fit_amplitudes(alphas, ks=None) -> FitResult:
    """Fit alpha_k = a + b sqrt(k) by ordinary least squares."""
    alphas = np.asarray(alphas, dtype=float)
    if ks is None:
        ks = np.arange(alphas.size)
    return _linear_fit(np.sqrt(np.asarray(ks, dtype=float)), alphas)


def fit_node_positions(position_table: dict, min_states: int = 5) -> dict:
    """Per-node-index fits of the law position = 1/sqrt(a k + b).

    position_table maps a state's total node count k to the array of its
    node radii.  The model is linearized exactly through 1/position^2 =
    a*k + b; node indices observed in fewer than min_states states are
    skipped.  Returns {node_index (1-based): FitResult}.
    """
    by_index: dict[int, list] = {}
    for k, positions in position_table.items():
        for j, rho in enumerate(np.asarray(positions, dtype=float), start=1):
            by_index.setdefault(j, []).append((float(k), rho))
    fits = {}
    for j, rows in sorted(by_index.items()):
        if len(rows) < min_states:
            continue
        ks = np.array([row[0] for row in rows])
        rho = np.array([row[1] for row in rows])
        fit = _linear_fit(ks, 1.0 / rho**2)
        fits[j] = FitResult(a=fit.b, b=fit.a, rss=fit.rss,
                            conf_a=fit.conf_b, conf_b=fit.conf_a, n=fit.n)
    return fits


# --------------------------------------------------------------------------
# extrema and the soliton tail


def extrema_profile(state: GridFunction):
    """(radius, |value|) of the extremum of each nodal component.

    The discrete argmax of |u| within the component is refined by the
    vertex of the parabola through it and its in-component neighbours.
    """
    dec = decompose(state)
    v = np.abs(state.values)
    r, h = state.grid.r, state.grid.h
    out = []
    for a, b in dec.component_ranges:
        i = a + int(np.argmax(v[a:b]))
        pos, val = float(r[i]), float(v[i])
        if a < i < b - 1:
            ym, y0, yp = v[i - 1], v[i], v[i + 1]
            denom = ym - 2.0 * y0 + yp
            if denom < 0.0:
                delta = 0.5 * (ym - yp) / denom
                pos += delta * h
                val = y0 - 0.25 * (ym - yp) * delta
        out.append((pos, val))
    return out


def sech_tail_compare(state: GridFunction, shift: float | None = None):
    """Sup gap between |u| on the last interior component and sqrt(2) sech.

    Minimizes over the shift of the soliton profile sqrt(2) sech(r - s);
    returns (gap, best shift).  The state must have at least two sign
    changes so that a full oscillation precedes the tail component.
    """
    dec = decompose(state)
    if dec.n_nodes < 2:
        raise ValueError(
            f"need at least 2 sign changes for a full interior oscillation, "
            f"got {dec.n_nodes}"
        )
    k = dec.n_nodes - 1
    a, b = int(dec.comp_start[k]), int(dec.comp_stop[k])
    r = state.grid.r[a:b]
    y = np.abs(state.values[a:b])
    lo, hi = dec.node_positions[k - 1], dec.node_positions[k]

    def gap(s):
        return float(np.max(np.abs(y - math.sqrt(2.0) / np.cosh(r - s))))

    if shift is None:
        shift = float(r[np.argmax(y)])
    res = optimize.minimize_scalar(gap, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10})
    best = float(res.x)
    if gap(shift) < res.fun:
        best = float(shift)
    return gap(best), best
