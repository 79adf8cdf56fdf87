"""Monte Carlo laboratory for one-dimensional backward doubly stochastic
differential equations: reproducible driver paths, an exact linear engine,
a per-backward-path regression solver, and statistical theorem verifiers."""

__version__ = "0.1.0"

from .drivers import (
    TimeGrid, RngSpec, DriverPaths, make_grid, sample_driver_paths,
    coarsen_paths, forward_ito_sum, backward_ito_sum, time_quadrature,
)
from .coefficients import (
    AssumptionCard, DriverSpec, NoiseLoadingSpec, TerminalFamily, ForwardSpec,
    builtin_catalog, audit_assumptions,
)
from .linear import (
    LinearProblem, QFactor, q_factor, q_conditional_bounds_check,
    explicit_linear_solution, bounding_envelope,
)
from .lsmc import (
    ForwardPaths, RegressionBasis, SchemeConfig, BackwardSolution, FieldReport,
    euler_forward, regress_conditional, solve_bdsde_lsmc, spde_field,
)

__all__ = [
    "TimeGrid", "RngSpec", "DriverPaths", "make_grid", "sample_driver_paths",
    "coarsen_paths", "forward_ito_sum", "backward_ito_sum", "time_quadrature",
    "AssumptionCard", "DriverSpec", "NoiseLoadingSpec", "TerminalFamily",
    "ForwardSpec", "builtin_catalog", "audit_assumptions",
    "LinearProblem", "QFactor", "q_factor", "q_conditional_bounds_check",
    "explicit_linear_solution", "bounding_envelope",
    "ForwardPaths", "RegressionBasis", "SchemeConfig", "BackwardSolution",
    "FieldReport", "euler_forward", "regress_conditional", "solve_bdsde_lsmc",
    "spde_field",
]
