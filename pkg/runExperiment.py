"""
runExperiment.py
Main script for running one stochastic quasi-Newton (or baseline) optimization.

The run is configured entirely from command-line flags; an optional .env
file supplies the MNIST directory, output directory, debug flag and log
level when the corresponding flags are absent.

Example:
    python runExperiment.py --optimizer sdlbfgs --problem rosenbrock2d --iters 1000000 --seed 1

Output:
- <out>.csv: One trajectory record per iteration (iter,objective,grad_norm,alpha,test_accuracy,flag)
- runExperiment.log: Processing log file
- debug/<run>/: Resolved configuration and final state (debug mode only)

Exit codes: 0 success (including runs ending with a nonfinite record),
1 usage error, 2 I/O error, 3 numerical failure.
"""

import sys
import logging
from datetime import datetime

SCRIPT_VERSION = "1.0.0"

from sdq import (
    cfgLog, cfgEnv,
    parse_config, run_experiment,
    RunFlag,
    UsageError, InvalidConfigError, DataFormatError, NumericalFailureError,
    EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERICAL
)


def main(argv=None) -> int:
    """
    Parse the flags, execute the run and translate failures into exit codes.
    """
    start_time = datetime.now()

    # ===============================================================
    # Configuration Phase
    # ===============================================================

    config = cfgEnv()
    try:
        run_cfg = parse_config(argv, config)
    except UsageError as e:
        cfgLog(config['log_level'])
        logging.error(f"Usage error: {e}")
        return EXIT_USAGE

    cfgLog(run_cfg.log_level)
    logging.info(f'========= STOCHASTIC DAMPED L-BFGS EXPERIMENT (Ver {SCRIPT_VERSION}) ==========')
    logging.info(f'Optimizer: {run_cfg.optimizer.value}')
    logging.info(f'Problem: {run_cfg.problem.value}')
    logging.info(f'Schedule: {run_cfg.schedule.kind.value}, base {run_cfg.schedule.base:g}')
    logging.info(f'Memory size: {run_cfg.memory_size}, batch size: {run_cfg.batch_size}')
    logging.info(f'Seed: {run_cfg.seed}')
    logging.info(f'Output: {run_cfg.out_path}')
    if run_cfg.debug:
        logging.info('>' * 30 + ' DEBUG MODE ' + '<' * 30)

    # ===============================================================
    # Run Phase
    # ===============================================================

    try:
        records = run_experiment(run_cfg, keep_records=False)
    except InvalidConfigError as e:
        logging.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except (OSError, DataFormatError) as e:
        logging.error(f"I/O error: {e}")
        return EXIT_IO
    except NumericalFailureError as e:
        logging.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL

    # ===============================================================
    # Summary Report
    # ===============================================================

    last = records[-1]
    logging.info("=" * 38)
    logging.info("Run Summary:")
    logging.info(f"Iterations: {last.iter:,}")
    logging.info(f"Final objective: {last.objective:.6g}")
    if last.test_accuracy is not None:
        logging.info(f"Final test accuracy: {last.test_accuracy:.4f}")
    logging.info(f"Final flag: {last.flag.value}")
    logging.info("=" * 38)
    if last.flag is RunFlag.NONFINITE:
        logging.warning("Run stopped on non-finite values; the CSV holds the trajectory up to that point")

    total_time = datetime.now() - start_time
    logging.info(f"Total execution time: {str(total_time).split('.')[0]}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
