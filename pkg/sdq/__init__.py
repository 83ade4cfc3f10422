"""
__init__.py
SDQ Package - Stochastic damped limited-memory BFGS toolkit.

This package provides modular components for running stochastic
quasi-Newton optimizers (SdLBFGS and SdLBFGS0) against first-order
baselines on test functions and small classification problems.

Modules:
- sdq_cfg: Configuration, logging and shared defaults
- sdq_errors: Exception hierarchy
- sdq_debug: Debug file writing utilities
- sdq_engine: Damped curvature pairs, memory and the H_k g_k product
- sdq_optim: Step schedules and optimizer iterations
- sdq_objectives: Gradient oracles (Rosenbrock, quadratic, logistic regression, MLP)
- sdq_data: IDX/MNIST loading, synthetic blobs and subsets
- sdq_harness: RunConfig, CLI parsing, run loop and sweeps
- sdq_export: Trajectory CSV files, run comparison and Excel summary

Version: 1.0.0
"""

__version__ = "1.0.0"

# Configuration functions
from .sdq_cfg import cfgLog, cfgEnv, EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL

# Errors
from .sdq_errors import (
    SdqError, InvalidInputError, DegenerateStepError, NumericalFailureError,
    InvalidConfigError, UsageError, DataFormatError, DataLengthError, DataConsistencyError
)

# Debug functions
from .sdq_debug import dbgWrite

# Direction engine
from .sdq_engine import (
    InitMode, Recursion, DampingConfig, CurvaturePair, CurvatureMemory,
    compute_theta, compute_gamma, damp_pair, raw_pair,
    two_loop, compact_product, dense_hessian_reconstruct,
    normalize_direction, compute_direction
)

# Optimizers
from .sdq_optim import (
    OptimizerKind, ScheduleKind, RunFlag, StepSchedule, TrajectoryRecord, OptimizerState,
    schedule_alpha, default_config, init_state,
    sdlbfgs_step, sdlbfgs0_step, sgd_step, adagrad_step, lbfgs_plain_step, step
)

# Objectives
from .sdq_objectives import (
    GradientOracle, RosenbrockOracle, QuadraticOracle, LogisticRegressionOracle, MLPOracle,
    rosenbrock_oracle, quadratic_oracle, logistic_regression_oracle, mlp_oracle,
    make_batch_seed, split_batch_seed, finite_difference_check
)

# Datasets
from .sdq_data import (
    Dataset, load_idx_images, load_idx_labels, load_mnist,
    write_idx_images, write_idx_labels, synthetic_blobs, subset
)

# Harness
from .sdq_harness import Problem, RunConfig, parse_config, build_problem, run_experiment, run_sweep

# Export functions
from .sdq_export import write_csv, read_csv, compare_runs, select_best, export_summary_excel

__all__ = [
    # Configuration
    'cfgLog', 'cfgEnv',
    'EXIT_OK', 'EXIT_USAGE', 'EXIT_IO', 'EXIT_NUMERICAL',
    # Errors
    'SdqError', 'InvalidInputError', 'DegenerateStepError', 'NumericalFailureError',
    'InvalidConfigError', 'UsageError', 'DataFormatError', 'DataLengthError', 'DataConsistencyError',
    # Debug
    'dbgWrite',
    # Direction engine
    'InitMode', 'Recursion', 'DampingConfig', 'CurvaturePair', 'CurvatureMemory',
    'compute_theta', 'compute_gamma', 'damp_pair', 'raw_pair',
    'two_loop', 'compact_product', 'dense_hessian_reconstruct',
    'normalize_direction', 'compute_direction',
    # Optimizers
    'OptimizerKind', 'ScheduleKind', 'RunFlag', 'StepSchedule', 'TrajectoryRecord', 'OptimizerState',
    'schedule_alpha', 'default_config', 'init_state',
    'sdlbfgs_step', 'sdlbfgs0_step', 'sgd_step', 'adagrad_step', 'lbfgs_plain_step', 'step',
    # Objectives
    'GradientOracle', 'RosenbrockOracle', 'QuadraticOracle', 'LogisticRegressionOracle', 'MLPOracle',
    'rosenbrock_oracle', 'quadratic_oracle', 'logistic_regression_oracle', 'mlp_oracle',
    'make_batch_seed', 'split_batch_seed', 'finite_difference_check',
    # Datasets
    'Dataset', 'load_idx_images', 'load_idx_labels', 'load_mnist',
    'write_idx_images', 'write_idx_labels', 'synthetic_blobs', 'subset',
    # Harness
    'Problem', 'RunConfig', 'parse_config', 'build_problem', 'run_experiment', 'run_sweep',
    # Export
    'write_csv', 'read_csv', 'compare_runs', 'select_best', 'export_summary_excel',
]
