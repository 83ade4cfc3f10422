"""
sdq_cfg.py
Configuration module for the SDQ optimization toolkit.

This module handles all configuration aspects including:
- Logging system setup with dynamic log filename
- Environment variable loading from an optional .env file
- Default value management for optimizer and harness settings

Dependencies:
- python-dotenv: For loading environment variables
- colorlog: For colored console log output

Version: 1.0.0
"""

import os
import sys
import logging
from typing import Dict, Any, Optional

import colorlog
from dotenv import load_dotenv, find_dotenv

# Optimizer defaults (memory and batch sizes of the reference protocol)
DEFAULT_MEMORY_SIZE = 100
DEFAULT_BATCH_SIZE = 64
DEFAULT_DELTA_SDLBFGS0 = 0.01
DEFAULT_DELTA_LBFGS = 1.0
DEFAULT_NORMALIZE_FLOOR = 1e-10
DEFAULT_DAMPING_THRESHOLD = 0.25
DEFAULT_DAMPING_NUMERATOR = 0.75
PAIR_SKIP_FLOOR = 1e-12

# Learning rates swept for the baselines
LR_GRID = (1e-4, 1e-3, 1e-2, 1e-1)

# Harness defaults
DEFAULT_ITERS = 1000
DEFAULT_OUT_DIR = 'runs'
DEFAULT_LOG_LEVEL = 'INFO'
DEFAULT_WORKERS = 4

# Process exit codes of the entry scripts
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3

LOG_FORMAT = '%(asctime)s - %(message)s'
CONSOLE_FORMAT = '%(log_color)s%(asctime)s - %(levelname)s - %(message)s'

_TRUE_VALUES = ('true', '1', 'yes', 'on')


def cfgLog(level: str = DEFAULT_LOG_LEVEL, log_file: Optional[str] = None) -> None:
    """
    Configure the logging system with file and console handlers.

    Sets up logging to write to both a log file (named after the main script
    unless given) and a colored console output. Calling it again replaces the
    handlers, so each entry script configures logging exactly once.

    Args:
        level: Logging level name (DEBUG, INFO, WARNING, ...)
        log_file: Log file path; defaults to '<script>.log'
    """
    if log_file is None:
        main_script = os.path.basename(sys.argv[0])
        log_file = os.path.splitext(main_script)[0] + '.log'
        if not log_file or log_file == '.log':
            log_file = 'application.log'

    numeric_level = getattr(logging, str(level).upper(), None)
    if not isinstance(numeric_level, int):
        numeric_level = logging.INFO

    file_handler = logging.FileHandler(log_file, encoding='utf-8')
    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))

    console_handler = colorlog.StreamHandler()
    console_handler.setFormatter(colorlog.ColoredFormatter(CONSOLE_FORMAT))

    logging.basicConfig(
        level=numeric_level,
        handlers=[file_handler, console_handler],
        force=True
    )

    logging.info(f"Logging to file: {log_file}")


def _env_bool(name: str, default: bool = False) -> bool:
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in _TRUE_VALUES


def _env_positive_int(name: str, default: int) -> int:
    value = os.getenv(name, str(default))
    try:
        parsed = int(value)
        if parsed <= 0:
            raise ValueError(f"{name} must be positive")
    except ValueError:
        logging.warning(f"Warning: Invalid {name} value '{value}'. Using default: {default}")
        parsed = default
    return parsed


def cfgEnv() -> Dict[str, Any]:
    """
    Load environment variables from an optional .env file.

    Unlike CLI flags, environment values never abort the program: an invalid
    value logs a warning and the default is used instead.

    Returns:
        Dict[str, Any]: Configuration dictionary containing:
            - mnist_dir: Directory holding the uncompressed MNIST IDX files (or None)
            - out_dir: Directory for run CSV files
            - debug: Debug mode flag
            - log_level: Logging level name
            - workers: Number of processes used by sweeps
    """
    dotenv_path = find_dotenv(usecwd=True)
    if dotenv_path:
        load_dotenv(dotenv_path)
        logging.debug(f"Loaded environment from {dotenv_path}")

    mnist_dir = os.getenv('SDQ_MNIST_DIR', '').strip() or None

    out_dir = os.getenv('SDQ_OUT_DIR', '').strip() or DEFAULT_OUT_DIR

    log_level = os.getenv('SDQ_LOG_LEVEL', DEFAULT_LOG_LEVEL).strip().upper()
    if not isinstance(getattr(logging, log_level, None), int):
        logging.warning(f"Warning: Invalid SDQ_LOG_LEVEL value '{log_level}'. Using default: {DEFAULT_LOG_LEVEL}")
        log_level = DEFAULT_LOG_LEVEL

    return {
        'mnist_dir': mnist_dir,
        'out_dir': out_dir,
        'debug': _env_bool('SDQ_DEBUG'),
        'log_level': log_level,
        'workers': _env_positive_int('SDQ_WORKERS', DEFAULT_WORKERS),
    }
