"""Amplitude shooting: radial IVP integration by classical RK4 and bisection.

The radial profile equation is solved as the first-order system

    u'  = v
    v'  = omega*u - f(u) - (d-1)/r * v,      u(0) = alpha, v(0) = 0,

with the removable singularity at the center resolved by
u''(0) = (omega*u(0) - f(u(0))) / d.  Counting the sign changes of the
integrated trajectory and bisecting the initial amplitude on that count
brackets the amplitude alpha_k whose trajectory decays with exactly k sign
changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Nonlinearity, PowerNonlinearity, SolverParams

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False

__all__ = [
    "BracketExpansionFailedError",
    "Trajectory",
    "ShootingOutcome",
    "rhs",
    "integrate",
    "count_nodes",
    "bisect",
    "default_rk_step",
]

DIVERGENCE_CAP = 1.0e8
EXPANSION_LIMIT = 60


class BracketExpansionFailedError(RuntimeError):
    """Doubling the upper amplitude never produced enough sign changes."""


def default_rk_step(R: float) -> float:
    """Default RK4 step size, min(1e-3, R/1e5); independent of the grid."""
    return min(1.0e-3, R / 1.0e5)


def rhs(r: float, U, params: SolverParams, f: Nonlinearity):
    """Right-hand side (u', u'') of the first-order radial system.

    At r = 0 the drift term is replaced by its limit, giving
    u''(0) = (omega*u - f(u)) / d; there u' must vanish.
    """
    u, du = float(U[0]), float(U[1])
    if not (math.isfinite(u) and math.isfinite(du)):
        raise ValueError(f"non-finite state at r = {r}: {(u, du)}")
    if r == 0.0:
        return du, (params.omega * u - float(f.f(u))) / params.d
    return du, params.omega * u - float(f.f(u)) - (params.d - 1) / r * du


def _rk4_power_py(alpha, omega, d, p, step, n_steps, cap):
    """Fixed-step RK4 for the power nonlinearity; cap-truncated.

    Returns (u, du, stored, diverged): arrays of length n_steps+1 of which
    the first `stored` entries are valid.
    """
    u = np.empty(n_steps + 1)
    du = np.empty(n_steps + 1)
    u[0] = alpha
    du[0] = 0.0
    y0 = alpha
    y1 = 0.0
    dm1 = d - 1.0
    half = 0.5 * step
    sixth = step / 6.0
    stored = n_steps + 1
    diverged = False
    for i in range(n_steps):
        r = i * step

        if p == 3.0:
            fv = y0 * y0 * y0
        else:
            fv = abs(y0) ** (p - 1.0) * y0
        if r == 0.0:
            a1 = (omega * y0 - fv) / d
        else:
            a1 = omega * y0 - fv - dm1 / r * y1
        k1u, k1v = y1, a1

        rm = r + half
        z0 = y0 + half * k1u
        z1 = y1 + half * k1v
        if p == 3.0:
            fv = z0 * z0 * z0
        else:
            fv = abs(z0) ** (p - 1.0) * z0
        k2u, k2v = z1, omega * z0 - fv - dm1 / rm * z1

        z0 = y0 + half * k2u
        z1 = y1 + half * k2v
        if p == 3.0:
            fv = z0 * z0 * z0
        else:
            fv = abs(z0) ** (p - 1.0) * z0
        k3u, k3v = z1, omega * z0 - fv - dm1 / rm * z1

        re = r + step
        z0 = y0 + step * k3u
        z1 = y1 + step * k3v
        if p == 3.0:
            fv = z0 * z0 * z0
        else:
            fv = abs(z0) ** (p - 1.0) * z0
        k4u, k4v = z1, omega * z0 - fv - dm1 / re * z1

        y0 = y0 + sixth * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        y1 = y1 + sixth * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not (math.isfinite(y0) and math.isfinite(y1)) or abs(y0) > cap or abs(y1) > cap:
            stored = i + 1
            diverged = True
            break
        u[i + 1] = y0
        du[i + 1] = y1
    return u, du, stored, diverged


if _HAVE_NUMBA:
    _rk4_power = numba.njit(cache=True)(_rk4_power_py)
else:  # pragma: no cover
    _rk4_power = _rk4_power_py


def _rk4_generic(alpha, params, f, step, n_steps, cap):
    # plain-python path for user-supplied nonlinearities
    u = np.empty(n_steps + 1)
    du = np.empty(n_steps + 1)
    u[0] = alpha
    du[0] = 0.0
    y = (alpha, 0.0)
    stored = n_steps + 1
    diverged = False
    for i in range(n_steps):
        r = i * step
        k1 = rhs(r, y, params, f)
        k2 = rhs(r + step / 2, (y[0] + step / 2 * k1[0], y[1] + step / 2 * k1[1]), params, f)
        k3 = rhs(r + step / 2, (y[0] + step / 2 * k2[0], y[1] + step / 2 * k2[1]), params, f)
        k4 = rhs(r + step, (y[0] + step * k3[0], y[1] + step * k3[1]), params, f)
        y = (
            y[0] + step / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
            y[1] + step / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
        )
        if not all(map(math.isfinite, y)) or abs(y[0]) > cap or abs(y[1]) > cap:
            stored = i + 1
            diverged = True
            break
        u[i + 1] = y[0]
        du[i + 1] = y[1]
    return u, du, stored, diverged


@dataclass(frozen=True)
class Trajectory:
    """RK4 samples (r_i, u_i, u'_i); truncated early when |u| or |u'| hit the cap."""

    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    step: float
    diverged: bool

    def __len__(self):
        return self.r.size


def integrate(
    alpha: float,
    params: SolverParams,
    step: float | None = None,
    r_max: float | None = None,
    nonlinearity: Nonlinearity | None = None,
    cap: float = DIVERGENCE_CAP,
) -> Trajectory:
    """Integrate the radial IVP from u(0) = alpha, u'(0) = 0 up to r_max.

    The trajectory is truncated (and flagged) once it exceeds the
    divergence cap; for amplitudes away from the decaying ones this is the
    expected outcome, not an error.
    """
    if step is None:
        step = default_rk_step(params.R if r_max is None else max(params.R, r_max))
    if r_max is None:
        r_max = params.R
    if not (step > 0 and math.isfinite(step)):
        raise ValueError(f"step must be positive, got {step}")
    if not math.isfinite(alpha):
        raise ValueError(f"alpha must be finite, got {alpha}")
    n_steps = int(round(r_max / step))
    if nonlinearity is None or isinstance(nonlinearity, PowerNonlinearity):
        p = params.p if nonlinearity is None else nonlinearity.p
        u, du, stored, diverged = _rk4_power(
            float(alpha), float(params.omega), float(params.d), float(p),
            float(step), n_steps, float(cap),
        )
    else:
        u, du, stored, diverged = _rk4_generic(alpha, params, nonlinearity, step, n_steps, cap)
    r = np.arange(stored, dtype=float) * step
    return Trajectory(r=r, u=u[:stored], du=du[:stored], step=step, diverged=diverged)


def count_nodes(trajectory: Trajectory) -> int:
    """Number of strict sign changes of the stored u samples."""
    u = trajectory.u
    if u.size == 0:
        raise ValueError("empty trajectory")
    return int(np.count_nonzero(u[:-1] * u[1:] < 0.0))


@dataclass(frozen=True)
class ShootingOutcome:
    """Result of one amplitude bisection.

    bracket_history rows are (a, b, c, node count at c) per iteration;
    expansions is the number of doublings used to secure the upper bound.
    """

    alpha: float
    node_count: int
    trajectory: Trajectory
    bracket_history: tuple = field(repr=False)
    iterations: int
    expansions: int = 0


def bisect(
    target_nodes: int,
    b: float,
    epsilon: float,
    params: SolverParams,
    step: float | None = None,
    r_max: float | None = None,
    nonlinearity: Nonlinearity | None = None,
    cap: float = DIVERGENCE_CAP,
) -> ShootingOutcome:
    """Bisect the initial amplitude on the trajectory's sign-change count.

    Starting from the bracket [0, b] (b doubled until its trajectory shows
    more than target_nodes sign changes), the midpoint amplitude replaces
    whichever end keeps node count at a <= target < count at b.  Stops when
    the bracket width reaches epsilon; the iteration count never exceeds
    ceil(log2((b - a)/epsilon)).
    """
    if target_nodes < 0:
        raise ValueError("target_nodes must be >= 0")
    if not (b > 0 and math.isfinite(b)):
        raise ValueError(f"upper amplitude must be positive, got {b}")
    if not (epsilon > 0):
        raise ValueError(f"epsilon must be positive, got {epsilon}")

    def shoot(alpha):
        return integrate(alpha, params, step=step, r_max=r_max,
                         nonlinearity=nonlinearity, cap=cap)

    expansions = 0
    while count_nodes(shoot(b)) <= target_nodes:
        expansions += 1
        if expansions > EXPANSION_LIMIT:
            raise BracketExpansionFailedError(
                f"no amplitude below {b} exceeds {target_nodes} sign changes"
            )
        b *= 2.0

    a = 0.0
    max_iters = math.ceil(math.log2((b - a) / epsilon))
    history = []
    for _ in range(max_iters):
        c = 0.5 * (a + b)
        if c == a or c == b:  # bracket at floating-point resolution
            break
        nc = count_nodes(shoot(c))
        history.append((a, b, c, nc))
        if nc > target_nodes:
            b = c
        else:
            a = c
        if b - a <= epsilon:
            break

    alpha = 0.5 * (a + b)
    trajectory = shoot(alpha)
    node_count = count_nodes(trajectory)
    if node_count != target_nodes:
        # midpoint fell on the supercritical side; the lower end has the
        # requested count by the bisection invariant
        alpha = a
        trajectory = shoot(alpha)
        node_count = count_nodes(trajectory)
    return ShootingOutcome(
        alpha=alpha,
        node_count=node_count,
        trajectory=trajectory,
        bracket_history=tuple(history),
        iterations=len(history),
        expansions=expansions,
    )
