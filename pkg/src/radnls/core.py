"""Problem description, radial grids, grid functions and nonlinearities.

The solvers in this package compute real radial profiles u(r) on [0, R]
satisfying

    -u'' - (d-1)/r u' + omega*u - f(u) = 0,    u'(0) = 0,  u(R) = 0,

with f an odd superlinear nonlinearity (the shipped implementation is the
power type f(s) = |s|^(p-1) s).  Everything here is immutable value data;
all operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SolverParams",
    "RadialGrid",
    "GridFunction",
    "Nonlinearity",
    "PowerNonlinearity",
    "make_grid",
    "sample",
    "power_nonlinearity",
    "critical_exponent",
]


def critical_exponent(d: int) -> float:
    """Largest admissible power p (exclusive): (d+2)/(d-2) for d >= 3, inf below."""
    if d >= 3:
        return (d + 2.0) / (d - 2.0)
    return math.inf


@dataclass(frozen=True)
class SolverParams:
    """Problem parameters shared by both solvers.

    d : spatial dimension (>= 1)
    omega : frequency of the stationary state (> 0)
    p : power of the nonlinearity, 1 < p < (d+2)/(d-2) for d >= 3
    R : radius of the truncated domain (> 0)
    N : number of interior grid points (>= 4); spacing h = R/N
    """

    d: int
    omega: float
    p: float
    R: float
    N: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be an integer >= 1, got {self.d}")
        if not (self.omega > 0 and math.isfinite(self.omega)):
            raise ValueError(f"omega must be positive and finite, got {self.omega}")
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ValueError(f"R must be positive and finite, got {self.R}")
        if int(self.N) != self.N or self.N < 4:
            raise ValueError(f"N must be an integer >= 4, got {self.N}")
        if not (1.0 < self.p < critical_exponent(self.d)):
            raise ValueError(
                f"p out of subcritical range: need 1 < p < {critical_exponent(self.d)} "
                f"for d = {self.d}, got p = {self.p}"
            )

    @property
    def h(self) -> float:
        return self.R / self.N

    def grid(self) -> "RadialGrid":
        return make_grid(self.R, self.N)


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid r_k = (k-1) h on [0, R], k = 1..N+1, with h = R/N.

    Grid functions carry samples at the first N nodes only; the value at
    r_{N+1} = R is structurally zero (Dirichlet wall).
    """

    R: float
    N: int
    h: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        h = self.R / self.N
        nodes = np.arange(self.N + 1, dtype=float) * h
        nodes.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "nodes", nodes)

    @property
    def r(self) -> np.ndarray:
        """Sample locations r_1..r_N (the Dirichlet node at R is excluded)."""
        return self.nodes[: self.N]

    def __eq__(self, other):
        return isinstance(other, RadialGrid) and other.R == self.R and other.N == self.N

    def __hash__(self):
        return hash((self.R, self.N))


def make_grid(R: float, N: int) -> RadialGrid:
    """Build the uniform radial grid on [0, R] with N cells of width R/N."""
    if not (R > 0 and math.isfinite(R)):
        raise ValueError(f"R must be positive and finite, got {R}")
    if int(N) != N or N < 4:
        raise ValueError(f"N must be an integer >= 4, got {N}")
    return RadialGrid(R=float(R), N=int(N))


@dataclass(frozen=True)
class GridFunction:
    """Real samples u(r_1)..u(r_N) on a radial grid; u(R) = 0 by convention."""

    values: np.ndarray
    grid: RadialGrid

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.N,):
            raise ValueError(
                f"values must have shape ({self.grid.N},), got {values.shape}"
            )
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(values, self.grid)


def sample(fn, grid: RadialGrid) -> GridFunction:
    """Sample a real-valued function of r at the grid's interior nodes."""
    values = np.asarray([fn(rk) for rk in grid.r], dtype=float)
    if not np.all(np.isfinite(values)):
        bad = grid.r[~np.isfinite(values)][0]
        raise ValueError(f"sampled function is not finite at r = {bad}")
    return GridFunction(values, grid)


class Nonlinearity:
    """Interface of an odd nonlinearity: f(s), its primitive F and s*f(s).

    F(s) = integral of f over [0, |s|], so F is even and F(0) = 0.  Methods
    accept scalars or numpy arrays.  Subclass to plug in other odd
    nonlinearities; the Nehari projection itself is power-specific.
    """

    def f(self, s):
        raise NotImplementedError

    def F(self, s):
        raise NotImplementedError

    def fs(self, s):
        """s * f(s); overridable when a cheaper closed form exists."""
        return np.asarray(s) * self.f(s)


class PowerNonlinearity(Nonlinearity):
    """f(s) = |s|^(p-1) s with p > 1; F(s) = |s|^(p+1) / (p+1)."""

    def __init__(self, p: float):
        if not (p > 1 and math.isfinite(p)):
            raise ValueError(f"power nonlinearity needs p > 1, got {p}")
        self.p = float(p)

    def f(self, s):
        s = np.asarray(s, dtype=float)
        if self.p == 3.0:
            out = s * s * s
        elif self.p == 2.0:
            out = np.abs(s) * s
        else:
            out = np.abs(s) ** (self.p - 1.0) * s
        return out if out.ndim else float(out)

    def F(self, s):
        s = np.asarray(s, dtype=float)
        out = np.abs(s) ** (self.p + 1.0) / (self.p + 1.0)
        return out if out.ndim else float(out)

    def fs(self, s):
        s = np.asarray(s, dtype=float)
        out = np.abs(s) ** (self.p + 1.0)
        return out if out.ndim else float(out)

    def __repr__(self):
        return f"PowerNonlinearity(p={self.p})"


def power_nonlinearity(p: float) -> PowerNonlinearity:
    """Power-type nonlinearity |s|^(p-1) s, the one used throughout."""
    return PowerNonlinearity(p)
