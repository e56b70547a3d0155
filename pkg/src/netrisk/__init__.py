"""Running-maximum value of an insurer covering a firewalled SIR network.

Three independent routes to the same value function — Monte-Carlo occupation
measures, an occupation-measure linear program, and semi-Lagrangian /
obstacle Hamilton-Jacobi solvers — built to cross-validate each other.
"""

__version__ = "0.1.0"

from .model import (
    ClaimLaw,
    ConfigError,
    ContractViolation,
    ControlPoint,
    Dynamics,
    LipschitzProfile,
    NetworkState,
    NonconvergenceError,
    PremiumSpec,
    PremiumTable,
    SirParams,
    Truncation,
    check_discount_rate,
    control_grid,
    frozen_dynamics,
    generic_dynamics,
    lipschitz_profile,
    load_model,
    net_premium,
    parse_model,
    post_jump_lipschitz,
    pure_discount_dynamics,
    sir_drift,
    sir_dynamics,
    sir_jump,
)
from .grids import AssemblyError, BoxGrid, StateGrid, geometric_a_axis, sir_feasible_mask, sir_state_grid
from .simulate import (
    ConstantControl,
    FeedbackTable,
    IntegrationError,
    OccupationMeasure,
    PiecewiseConstant,
    Trajectory,
    affine_fn,
    bump_fn,
    constant_fn,
    estimate_occupation,
    generator_residuals,
    hat_fn,
    moment_inequality_harness,
    premium_drift_check,
    simulate_path,
)
