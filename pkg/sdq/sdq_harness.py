"""
sdq_harness.py
Experiment harness for the SDQ optimization toolkit.

This module provides:
- Command-line parsing into a validated RunConfig
- Problem construction (2D test function, quadratic, synthetic and MNIST classifiers)
- The run loop: stepping, periodic test accuracy, early termination, CSV streaming
- Learning-rate grid sweeps in separate processes

A run always ends with a record flagged ok, converged or nonfinite; a
nonfinite record is terminal data and never escapes as an exception.

Version: 1.0.0
"""

import os
import re
import argparse
import logging
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, replace, asdict
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .sdq_cfg import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_ITERS,
    DEFAULT_LOG_LEVEL,
    DEFAULT_MEMORY_SIZE,
    DEFAULT_OUT_DIR,
    DEFAULT_WORKERS,
    LR_GRID,
)
from .sdq_data import Dataset, load_mnist, subset, synthetic_blobs
from .sdq_debug import DEBUG_FILE_PREFIX, dbgWrite
from .sdq_engine import Recursion
from .sdq_errors import InvalidConfigError, NumericalFailureError, UsageError
from .sdq_export import TrajectoryCsvWriter
from .sdq_objectives import (
    GradientOracle,
    LogisticRegressionOracle,
    MLPOracle,
    QuadraticOracle,
    RosenbrockOracle,
    make_batch_seed,
)
from .sdq_optim import (
    DEFAULT_ADAGRAD_EPS,
    OptimizerKind,
    RunFlag,
    ScheduleKind,
    StepSchedule,
    TrajectoryRecord,
    default_config,
    init_state,
    schedule_alpha,
    step,
)

# Learning rates used when --lr is not given
DEFAULT_QN_LR = 1.0
DEFAULT_BASELINE_LR = 0.01

# Desk-scale problem sizes
DEFAULT_N_TRAIN = 10000
DEFAULT_N_TEST = 2000
DEFAULT_HIDDEN = 32
SYNTH_PER_CLASS = 500
SYNTH_CLASSES = 4
SYNTH_DIM = 10
SYNTH_SEPARATION = 3.0
SYNTH_TRAIN = 1600
SYNTH_TEST = 400

PROGRESS_EVERY = 10000


class Problem(Enum):
    ROSENBROCK2D = 'rosenbrock2d'
    QUADRATIC = 'quadratic'
    LOGREG_SYNTH = 'logreg-synth'
    MLP_MNIST = 'mlp-mnist'
    LOGREG_MNIST = 'logreg-mnist'

    @property
    def mnist(self) -> bool:
        return self in (Problem.MLP_MNIST, Problem.LOGREG_MNIST)


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings of one run."""
    optimizer: OptimizerKind
    problem: Problem
    schedule: StepSchedule
    memory_size: int = DEFAULT_MEMORY_SIZE
    batch_size: int = DEFAULT_BATCH_SIZE
    delta: Optional[float] = None
    iters: int = DEFAULT_ITERS
    epochs: Optional[int] = None
    seed: int = 0
    eval_every: Optional[int] = None
    out_path: Optional[str] = None
    mnist_dir: Optional[str] = None
    recursion: Recursion = Recursion.TWO_LOOP
    same_batch_pairs: bool = False
    n_train: int = DEFAULT_N_TRAIN
    n_test: int = DEFAULT_N_TEST
    hidden: int = DEFAULT_HIDDEN
    l2: float = 0.0
    eps: float = DEFAULT_ADAGRAD_EPS
    debug: bool = False
    log_level: str = DEFAULT_LOG_LEVEL

    def __post_init__(self):
        checks = [
            (self.memory_size >= 1, f"memory_size must be at least 1, got {self.memory_size}"),
            (self.batch_size >= 1, f"batch_size must be at least 1, got {self.batch_size}"),
            (self.iters >= 1, f"iters must be at least 1, got {self.iters}"),
            (self.epochs is None or self.epochs >= 1, f"epochs must be at least 1, got {self.epochs}"),
            (self.eval_every is None or self.eval_every >= 1, f"eval_every must be at least 1, got {self.eval_every}"),
            (self.seed >= 0, f"seed must be non-negative, got {self.seed}"),
            (self.delta is None or self.delta > 0, f"delta must be positive, got {self.delta}"),
            (self.n_train >= 1 and self.n_test >= 1, "n_train and n_test must be positive"),
            (self.hidden >= 1, f"hidden must be at least 1, got {self.hidden}"),
            (self.l2 >= 0, f"l2 must be non-negative, got {self.l2}"),
        ]
        for ok, message in checks:
            if not ok:
                raise InvalidConfigError(message)


@dataclass(frozen=True)
class ProblemInstance:
    """Oracle, starting point and (for learning problems) the train/test data."""
    oracle: GradientOracle
    x0: np.ndarray
    train: Optional[Dataset] = None
    test: Optional[Dataset] = None


class UsageArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting."""

    def error(self, message: str) -> None:
        match = re.search(r"(?:argument |unrecognized arguments: )(--[\w-]+)", message)
        raise UsageError(message, flag=match.group(1) if match else None)


def _build_parser() -> UsageArgumentParser:
    parser = UsageArgumentParser(
        prog='runExperiment.py',
        description='Run one stochastic quasi-Newton (or baseline) optimization and log its trajectory to CSV.'
    )
    parser.add_argument('--optimizer', required=True, choices=[k.value for k in OptimizerKind])
    parser.add_argument('--problem', default=Problem.ROSENBROCK2D.value, choices=[p.value for p in Problem])
    parser.add_argument('--lr', type=float, help='step size base (default 1 for quasi-Newton, 0.01 otherwise)')
    parser.add_argument('--schedule', choices=[s.value for s in ScheduleKind],
                        help='default inv-sqrt for quasi-Newton, constant otherwise')
    parser.add_argument('--beta', type=float, default=0.75, help='exponent of the inv-power schedule')
    parser.add_argument('--memory-size', type=int, default=DEFAULT_MEMORY_SIZE)
    parser.add_argument('--batch-size', type=int, default=DEFAULT_BATCH_SIZE)
    parser.add_argument('--delta', type=float, help='gamma lower bound (default 0.01 sdlbfgs0, 1 lbfgs)')
    parser.add_argument('--iters', type=int, default=DEFAULT_ITERS)
    parser.add_argument('--epochs', type=int, help='learning problems: overrides --iters')
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--eval-every', type=int, help='iterations between test evaluations (default: one epoch)')
    parser.add_argument('--mnist-dir', help='directory of uncompressed MNIST IDX files')
    parser.add_argument('--out', help='CSV output path')
    parser.add_argument('--recursion', choices=[r.value for r in Recursion], default=Recursion.TWO_LOOP.value)
    parser.add_argument('--same-batch-pairs', action='store_true',
                        help='form y from two gradients of the same minibatch')
    parser.add_argument('--n-train', type=int, default=DEFAULT_N_TRAIN)
    parser.add_argument('--n-test', type=int, default=DEFAULT_N_TEST)
    parser.add_argument('--hidden', type=int, default=DEFAULT_HIDDEN)
    parser.add_argument('--l2', type=float, default=0.0)
    parser.add_argument('--debug', action='store_true')
    parser.add_argument('--log-level')
    return parser


def _require(condition: bool, flag: str, message: str) -> None:
    if not condition:
        raise UsageError(f"{flag}: {message}", flag=flag)


def default_out_path(out_dir: str, optimizer: OptimizerKind, problem: Problem, lr: float, seed: int) -> str:
    return os.path.join(out_dir, f"{optimizer.value}_{problem.value}_lr{lr:g}_seed{seed}.csv")


def parse_config(argv: Optional[Sequence[str]] = None, env: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Parse command-line flags into a RunConfig.

    Environment values (see cfgEnv) fill in the MNIST directory, output
    directory, debug flag and log level when the flags are absent.

    Raises:
        UsageError: unknown flag or invalid value; the message names the flag
    """
    env = env or {}
    args = _build_parser().parse_args(argv)

    optimizer = OptimizerKind(args.optimizer)
    problem = Problem(args.problem)

    _require(args.memory_size >= 1, '--memory-size', f"must be at least 1, got {args.memory_size}")
    _require(args.batch_size >= 1, '--batch-size', f"must be at least 1, got {args.batch_size}")
    _require(args.iters >= 1, '--iters', f"must be at least 1, got {args.iters}")
    _require(args.epochs is None or args.epochs >= 1, '--epochs', f"must be at least 1, got {args.epochs}")
    _require(args.eval_every is None or args.eval_every >= 1, '--eval-every',
             f"must be at least 1, got {args.eval_every}")
    _require(args.seed >= 0, '--seed', f"must be non-negative, got {args.seed}")
    _require(args.delta is None or (np.isfinite(args.delta) and args.delta > 0), '--delta',
             f"must be positive, got {args.delta}")
    _require(args.n_train >= 1, '--n-train', f"must be at least 1, got {args.n_train}")
    _require(args.n_test >= 1, '--n-test', f"must be at least 1, got {args.n_test}")
    _require(args.hidden >= 1, '--hidden', f"must be at least 1, got {args.hidden}")
    _require(np.isfinite(args.l2) and args.l2 >= 0, '--l2', f"must be non-negative, got {args.l2}")

    lr = args.lr
    if lr is None:
        lr = DEFAULT_QN_LR if optimizer.quasi_newton else DEFAULT_BASELINE_LR
    _require(np.isfinite(lr) and lr > 0, '--lr', f"must be positive, got {lr}")

    if args.schedule is None:
        kind = ScheduleKind.INVERSE_SQRT if optimizer.quasi_newton else ScheduleKind.CONSTANT
    else:
        kind = ScheduleKind(args.schedule)
    _require(kind is not ScheduleKind.INVERSE_POWER or 0.5 < args.beta < 1, '--beta',
             f"must lie in (0.5, 1), got {args.beta}")

    log_level = (args.log_level or env.get('log_level') or DEFAULT_LOG_LEVEL).upper()
    _require(isinstance(getattr(logging, log_level, None), int), '--log-level', f"unknown level {log_level}")

    out_path = args.out or default_out_path(env.get('out_dir') or DEFAULT_OUT_DIR, optimizer, problem, lr, args.seed)

    return RunConfig(
        optimizer=optimizer,
        problem=problem,
        schedule=StepSchedule(kind=kind, base=lr, beta=args.beta),
        memory_size=args.memory_size,
        batch_size=args.batch_size,
        delta=args.delta,
        iters=args.iters,
        epochs=args.epochs,
        seed=args.seed,
        eval_every=args.eval_every,
        out_path=out_path,
        mnist_dir=args.mnist_dir or env.get('mnist_dir'),
        recursion=Recursion(args.recursion),
        same_batch_pairs=args.same_batch_pairs,
        n_train=args.n_train,
        n_test=args.n_test,
        hidden=args.hidden,
        l2=args.l2,
        debug=args.debug or bool(env.get('debug')),
        log_level=log_level,
    )


def build_problem(cfg: RunConfig) -> ProblemInstance:
    """
    Construct the oracle and data of a run. Data files are read here, so
    missing files fail before any iteration.

    Raises:
        FileNotFoundError: MNIST directory not configured or files missing
        InvalidConfigError: sizes inconsistent with the data
    """
    if cfg.problem is Problem.ROSENBROCK2D:
        oracle = RosenbrockOracle()
        return ProblemInstance(oracle, oracle.initial_point())
    if cfg.problem is Problem.QUADRATIC:
        oracle = QuadraticOracle(2)
        return ProblemInstance(oracle, oracle.initial_point())

    if cfg.problem is Problem.LOGREG_SYNTH:
        data = synthetic_blobs(SYNTH_PER_CLASS, SYNTH_CLASSES, SYNTH_DIM, SYNTH_SEPARATION, cfg.seed)
        train, test = subset(data, SYNTH_TRAIN, SYNTH_TEST, cfg.seed)
        oracle = LogisticRegressionOracle(train, cfg.l2, cfg.batch_size)
        return ProblemInstance(oracle, oracle.initial_point(), train, test)

    if cfg.problem.mnist and not cfg.mnist_dir:
        raise FileNotFoundError("No MNIST directory configured: pass --mnist-dir or set SDQ_MNIST_DIR")
    train, test = subset(load_mnist(cfg.mnist_dir, 'train'), cfg.n_train, cfg.n_test, cfg.seed)

    if cfg.problem is Problem.LOGREG_MNIST:
        oracle = LogisticRegressionOracle(train, cfg.l2, cfg.batch_size)
    else:
        oracle = MLPOracle(train, [train.d, cfg.hidden, train.num_classes], cfg.batch_size, cfg.seed)
    return ProblemInstance(oracle, oracle.initial_point(), train, test)


def _run_name(cfg: RunConfig) -> str:
    if cfg.out_path:
        return os.path.splitext(os.path.basename(cfg.out_path))[0]
    return f"{cfg.optimizer.value}_{cfg.problem.value}_seed{cfg.seed}"


def run_experiment(cfg: RunConfig, keep_records: bool = True,
                   problem: Optional[ProblemInstance] = None) -> List[TrajectoryRecord]:
    """
    Execute one run and stream its records to cfg.out_path (when set).

    Learning problems evaluate held-out accuracy every eval_every iterations
    and at the last iteration; the accuracy belongs to the iterate reached
    after that iteration. The run stops early on a converged or nonfinite
    record.

    Args:
        cfg: Run configuration
        keep_records: Return every record (True) or only the final one
        problem: Prebuilt problem (default: build_problem(cfg))

    Returns:
        List[TrajectoryRecord]: The run's records
    """
    if problem is None:
        problem = build_problem(cfg)

    kind = cfg.optimizer
    state = init_state(problem.x0, kind, cfg.memory_size,
                       default_config(kind, cfg.delta, cfg.recursion))

    learning = problem.train is not None
    iters = cfg.iters
    eval_every = cfg.eval_every
    if learning:
        batches_per_epoch = max(1, problem.train.n // cfg.batch_size)
        if cfg.epochs is not None:
            iters = cfg.epochs * batches_per_epoch
        if eval_every is None:
            eval_every = batches_per_epoch

    run_name = _run_name(cfg)
    dbgWrite(DEBUG_FILE_PREFIX['config'].format(run=run_name), asdict(cfg), cfg.debug)
    logging.info(f"Run {run_name}: {kind.value} on {cfg.problem.value}, {iters:,} iterations, "
                 f"dimension {state.x.shape[0]:,}")

    records: List[TrajectoryRecord] = []
    last: Optional[TrajectoryRecord] = None
    sink = TrajectoryCsvWriter(cfg.out_path) if cfg.out_path else nullcontext()

    with sink as writer:
        for i in range(1, iters + 1):
            batch_seed = make_batch_seed(cfg.seed, state.k)
            try:
                state, record = step(kind, state, problem.oracle, cfg.schedule, batch_seed,
                                     eps=cfg.eps, same_batch_pairs=cfg.same_batch_pairs)
            except NumericalFailureError as e:
                logging.warning(f"Run {run_name} stopped: {e}")
                record = TrajectoryRecord(state.k, e.objective, e.grad_norm,
                                          schedule_alpha(cfg.schedule, state.k), flag=RunFlag.NONFINITE)

            if learning and record.flag is not RunFlag.NONFINITE and (
                    i % eval_every == 0 or i == iters or record.flag is RunFlag.CONVERGED):
                accuracy = problem.oracle.accuracy(state.x, problem.test)
                record = replace(record, test_accuracy=accuracy)
                logging.info(f"[{i:,}/{iters:,}] objective={record.objective:.6g} test_accuracy={accuracy:.4f}")
            elif i % PROGRESS_EVERY == 0:
                logging.info(f"[{i:,}/{iters:,}] objective={record.objective:.6g}")

            if writer is not None:
                writer.append(record)
            if keep_records:
                records.append(record)
            last = record

            if record.flag is not RunFlag.OK:
                break

    if last.flag is RunFlag.NONFINITE:
        logging.warning(f"Run {run_name} ended with non-finite values at iteration {last.iter}")
    elif last.flag is RunFlag.CONVERGED:
        logging.info(f"Run {run_name} converged at iteration {last.iter}")
    logging.info(f"Run {run_name} finished: final objective {last.objective:.6g}")

    dbgWrite(DEBUG_FILE_PREFIX['summary'].format(run=run_name), {
        'k': state.k,
        'memory_pairs': len(state.memory) if state.memory is not None else None,
        'final_flag': last.flag.value,
        'final_objective': last.objective,
    }, cfg.debug)

    return records if keep_records else [last]


def _run_to_csv(cfg: RunConfig) -> str:
    run_experiment(cfg, keep_records=False)
    return cfg.out_path


def run_sweep(cfg: RunConfig, optimizers: Sequence[OptimizerKind], lrs: Sequence[float] = LR_GRID,
              out_dir: str = DEFAULT_OUT_DIR, workers: int = DEFAULT_WORKERS) -> List[str]:
    """
    Run every (optimizer, learning rate) pair as an independent process.

    Quasi-Newton modes keep the schedule kind of `cfg` with the swept base;
    baselines use a constant learning rate. Each run writes its own CSV.

    Returns:
        List[str]: CSV paths in (optimizer, lr) order
    """
    configs = []
    for optimizer in optimizers:
        for lr in lrs:
            kind = cfg.schedule.kind if optimizer.quasi_newton else ScheduleKind.CONSTANT
            configs.append(replace(
                cfg,
                optimizer=optimizer,
                schedule=StepSchedule(kind=kind, base=lr, beta=cfg.schedule.beta),
                out_path=default_out_path(out_dir, optimizer, cfg.problem, lr, cfg.seed),
            ))

    logging.info(f"Sweeping {len(configs)} runs with {workers} worker processes")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        paths = list(pool.map(_run_to_csv, configs))
    logging.info(f"Sweep complete: {len(paths)} CSV files in {out_dir}")
    return paths
