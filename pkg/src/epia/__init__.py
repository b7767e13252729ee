"""Numerical policy iteration for entropy-regularized stochastic control on
discounted infinite horizons: Gibbs policy updates, linear policy-evaluation
solves, convergence/scaling diagnostics, Monte-Carlo cross-checks, and exact
counterexample certification."""

__version__ = "0.1.0"

from .analysis import (  # noqa: F401
    epsilon_floor_sweep,
    fit_geometric_rate,
    holder_seminorm,
    rho_scaling_sweep,
    weighted_h1_error,
)
from .discretize import (  # noqa: F401
    ActionQuadrature,
    Grid,
    ScalarField,
    build_action_quadrature,
    build_grid,
    gradient,
    hessian,
)
from .expr import parse_coefficient_expr  # noqa: F401
from .linsolve import assemble_operator, solve_policy_evaluation  # noqa: F401
from .mcoracle import mc_value, simulate_exploratory_sde  # noqa: F401
from .pia import Discretization, pia_run, pia_step, reference_solution  # noqa: F401
from .policy import (  # noqa: F401
    F_pi,
    averaged_coefficients,
    entropy,
    gibbs_policy,
    hamiltonian_F,
)
from .problem import (  # noqa: F401
    ControlProblem,
    GrowthRecord,
    builtin_problem,
    expression_problem,
    validate_problem,
)
