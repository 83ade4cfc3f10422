"""
sdq_debug.py
Debug utilities module for the SDQ optimization toolkit.

This module provides debugging functionality including:
- Conditional debug file writing based on debug flag
- Automatic directory creation for debug output
- JSON formatting of configuration objects and numpy values

Version: 1.0.0
"""

import os
import json
import logging
from dataclasses import asdict, is_dataclass
from enum import Enum
from typing import Any

import numpy as np

# Debug file naming patterns for the artifacts of one run
DEBUG_FILE_PREFIX = {
    'config': 'debug/{run}/config.json',
    'summary': 'debug/{run}/summary.json',
}


def dbgWrite(filename: str, content: Any, debug: bool) -> None:
    """
    Write content to a debug file if debug mode is enabled.

    Args:
        filename: Path to the debug file (directories will be created)
        content: Content to write (string, dict, list, dataclass, ...)
        debug: Debug mode flag - if False, function returns immediately

    Note:
        File system errors are logged but don't stop execution.
    """
    if not debug:
        return

    try:
        directory = os.path.dirname(filename)
        if directory:
            os.makedirs(directory, exist_ok=True)

        with open(filename, 'w', encoding='utf-8') as f:
            f.write(_format_content(content))

    except Exception as e:
        logging.warning(f"Debug write failed for '{filename}': {str(e)}")


def _json_default(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return str(value)


def _format_content(content: Any) -> str:
    """
    Format content for debug output based on its type.

    Args:
        content: Content to format (any type)

    Returns:
        str: Formatted string representation
    """
    if content is None:
        return "None"

    if is_dataclass(content) and not isinstance(content, type):
        content = asdict(content)

    if isinstance(content, (dict, list)):
        try:
            return json.dumps(content, indent=2, ensure_ascii=False, default=_json_default)
        except (TypeError, ValueError):
            return str(content)

    return str(content)
