"""Radial bound states of the stationary nonlinear Schrodinger equation.

Two independent solvers for radial profiles with a prescribed number of
sign changes: amplitude-bisection shooting of the radial initial value
problem, and projected gradient descent of the action constrained to the
discrete nodal Nehari set.  The analysis layer reproduces the refinement,
comparison and empirical-law studies; the ``radnls`` command drives
everything from declarative configs.
"""

from .core import (
    GridFunction,
    Nonlinearity,
    PowerNonlinearity,
    RadialGrid,
    SolverParams,
    critical_exponent,
    make_grid,
    power_nonlinearity,
    sample,
)
from .quadrature import (
    DegenerateZeroError,
    DiscreteFunctionals,
    NodalDecomposition,
    action,
    decompose,
    functionals,
    grad_component,
    grad_components,
    lp_component,
    lp_components,
    nehari_residuals,
)
from .shooting import (
    BracketExpansionFailedError,
    ShootingOutcome,
    Trajectory,
    bisect,
    count_nodes,
    default_rk_step,
    integrate,
    rhs,
)
from .nehari import (
    EmptyComponentError,
    MaxIterExceededError,
    NehariRun,
    NodeCountChangedError,
    RadialLaplacian,
    build_laplacian,
    default_tau,
    descend,
    descent_direction,
    initial_state,
    project,
    projection_factors,
    trim_divergent_tail,
)
from .analysis import (
    ConvergenceReport,
    FitResult,
    NonNestedGridsError,
    RankDeficientError,
    amplitude_sweep,
    combined_state,
    convergence_study,
    cross_method_gap,
    extrema_profile,
    fit_amplitudes,
    fit_node_positions,
    grid_errors,
    nehari_state,
    sech_tail_compare,
    shooting_state,
    trajectory_node_radii,
)

__version__ = "0.1.0"
