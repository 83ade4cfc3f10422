"""
sweepRuns.py
Main script for the learning-rate grid sweep.

Every optimizer given with --optimizers is run once per learning rate of the
grid (default 1e-4, 1e-3, 1e-2, 1e-1), each run in its own process with its
own CSV. The remaining flags are those of runExperiment.py and apply to all
runs; --optimizer selects the schedule template for the quasi-Newton modes.

Example:
    python sweepRuns.py --optimizers sgd adagrad sdlbfgs --problem logreg-synth --epochs 3

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numerical failure.
"""

import sys
import logging
from datetime import datetime

SCRIPT_VERSION = "1.0.0"

from sdq import (
    cfgLog, cfgEnv,
    parse_config, run_sweep, compare_runs, select_best,
    OptimizerKind,
    UsageError, InvalidConfigError, DataFormatError, NumericalFailureError,
    EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL
)
from sdq.sdq_cfg import LR_GRID, DEFAULT_OUT_DIR
from sdq.sdq_harness import UsageArgumentParser


def _split_args(argv):
    parser = UsageArgumentParser(prog='sweepRuns.py', add_help=False)
    parser.add_argument('--optimizers', nargs='+', default=[k.value for k in OptimizerKind],
                        choices=[k.value for k in OptimizerKind])
    parser.add_argument('--lrs', nargs='+', type=float, default=list(LR_GRID))
    parser.add_argument('--out-dir')
    parser.add_argument('--workers', type=int)
    return parser.parse_known_args(argv)


def main(argv=None) -> int:
    """Run the sweep and log the best run of the grid."""
    start_time = datetime.now()
    config = cfgEnv()
    argv = list(sys.argv[1:] if argv is None else argv)

    try:
        sweep_args, rest = _split_args(argv)
        if '--optimizer' not in rest:
            rest = ['--optimizer', sweep_args.optimizers[0]] + rest
        run_cfg = parse_config(rest, config)
        if any(lr <= 0 for lr in sweep_args.lrs):
            raise UsageError("--lrs: learning rates must be positive", flag='--lrs')
        workers = sweep_args.workers or config['workers']
        if workers < 1:
            raise UsageError("--workers: must be at least 1", flag='--workers')
    except UsageError as e:
        cfgLog(config['log_level'])
        logging.error(f"Usage error: {e}")
        return EXIT_USAGE

    cfgLog(run_cfg.log_level)
    logging.info(f'========= LEARNING-RATE SWEEP (Ver {SCRIPT_VERSION}) ==========')
    out_dir = sweep_args.out_dir or config['out_dir'] or DEFAULT_OUT_DIR
    optimizers = [OptimizerKind(name) for name in sweep_args.optimizers]

    try:
        paths = run_sweep(run_cfg, optimizers, sweep_args.lrs, out_dir, workers)
        summary = compare_runs(paths)
    except InvalidConfigError as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except (OSError, DataFormatError) as e:
        logging.error(f"I/O error: {e}")
        return EXIT_IO
    except NumericalFailureError as e:
        logging.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL

    best = select_best(summary)
    logging.info("=" * 38)
    logging.info(f"Runs: {len(paths)}")
    logging.info(f"Best run: {best['run']}")
    logging.info("=" * 38)

    total_time = datetime.now() - start_time
    logging.info(f"Total execution time: {str(total_time).split('.')[0]}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
