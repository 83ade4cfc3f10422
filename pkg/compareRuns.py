"""
compareRuns.py
Main script for comparing trajectory CSV files of several runs.

Prints a summary table (final/best objective and test accuracy per run),
names the best run and optionally writes the table to a formatted Excel file.

Example:
    python compareRuns.py runs/sgd_*.csv runs/sdlbfgs_*.csv --xlsx comparison.xlsx

Exit codes: 0 success, 1 usage error, 2 I/O error.
"""

import sys
import logging

SCRIPT_VERSION = "1.0.0"

from sdq import (
    cfgLog, cfgEnv,
    compare_runs, select_best, export_summary_excel,
    InvalidInputError, UsageError, DataFormatError,
    EXIT_OK, EXIT_USAGE, EXIT_IO
)
from sdq.sdq_harness import UsageArgumentParser


def _parse_args(argv):
    parser = UsageArgumentParser(prog='compareRuns.py',
                                 description='Summarize and compare trajectory CSV files.')
    parser.add_argument('paths', nargs='+', help='trajectory CSV files')
    parser.add_argument('--labels', nargs='+', help='run labels (default: file names)')
    parser.add_argument('--xlsx', help='also write the summary to this Excel file')
    parser.add_argument('--log-level')
    return parser.parse_args(argv)


def main(argv=None) -> int:
    """Build the comparison table and report the best run."""
    config = cfgEnv()
    try:
        args = _parse_args(argv)
    except UsageError as e:
        cfgLog(config['log_level'])
        logging.error(f"Usage error: {e}")
        return EXIT_USAGE
    cfgLog(args.log_level or config['log_level'])
    logging.info(f'========= RUN COMPARISON (Ver {SCRIPT_VERSION}) ==========')

    try:
        summary = compare_runs(args.paths, args.labels)
        best = select_best(summary)
        if args.xlsx:
            export_summary_excel(summary, args.xlsx)
    except InvalidInputError as e:
        logging.error(f"Usage error: {e}")
        return EXIT_USAGE
    except (OSError, DataFormatError) as e:
        logging.error(f"I/O error: {e}")
        return EXIT_IO

    print(summary.to_string(index=False))
    logging.info(f"Best run: {best['run']} (final accuracy {best['final_accuracy']}, "
                 f"final objective {best['final_objective']:.6g})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
