"""Totally asynchronous block quadratic programming toolkit.

Block-partitioned QP model, independent per-block stepsize and
regularization selection rules, regularization error bounds, a
deterministic discrete-event asynchrony simulator, and brute-force
verification oracles for all of the above.
"""
from .blocks import (
    BlockMatrix,
    BlockPartition,
    BlockVector,
    block_max_norm,
    block_norm_table,
    dominance_gap,
    dominance_gaps,
    gershgorin_lambda_min_bound,
    induced_norm_upper_bound,
    inverse_norm_bound,
    is_strictly_block_diag_dominant,
    spectral_norm,
    symmetric_extreme_eigs,
)
from .bounds import (
    absolute_cost_error_bound,
    absolute_state_error_bound,
    cost_error_alpha_cap,
    implied_cost_error,
    solution_error_alpha_cap,
)
from .generate import generate
from .qp import (
    Ball,
    Box,
    QuadraticProgram,
    Regularization,
    Unconstrained,
    centralized_minimizer,
    exact_unconstrained_minimizer,
    gradient_block,
    objective,
    project_block,
    validate,
)
from .rates import (
    BlockRates,
    compute_rates,
    contraction_rate,
    network_rate,
    optimal_stepsize,
    regularization_for_rate,
    select_regularization_for_rate,
    stepsize_bound,
)
from .sim import (
    AsynchronyModel,
    CycleTracker,
    FixedDelay,
    GeometricDelay,
    RunTrace,
    Simulation,
    ZeroDelay,
    run,
    run_concurrent,
    verify_contraction_envelope,
)

__version__ = "0.1.0"

__all__ = [
    "AsynchronyModel",
    "Ball",
    "BlockMatrix",
    "BlockPartition",
    "BlockRates",
    "BlockVector",
    "Box",
    "CycleTracker",
    "FixedDelay",
    "GeometricDelay",
    "QuadraticProgram",
    "Regularization",
    "RunTrace",
    "Simulation",
    "Unconstrained",
    "ZeroDelay",
    "absolute_cost_error_bound",
    "absolute_state_error_bound",
    "block_max_norm",
    "block_norm_table",
    "centralized_minimizer",
    "compute_rates",
    "contraction_rate",
    "cost_error_alpha_cap",
    "dominance_gap",
    "dominance_gaps",
    "exact_unconstrained_minimizer",
    "generate",
    "gershgorin_lambda_min_bound",
    "gradient_block",
    "implied_cost_error",
    "induced_norm_upper_bound",
    "inverse_norm_bound",
    "is_strictly_block_diag_dominant",
    "network_rate",
    "objective",
    "optimal_stepsize",
    "project_block",
    "regularization_for_rate",
    "run",
    "run_concurrent",
    "select_regularization_for_rate",
    "solution_error_alpha_cap",
    "spectral_norm",
    "stepsize_bound",
    "symmetric_extreme_eigs",
    "validate",
    "verify_contraction_envelope",
]
