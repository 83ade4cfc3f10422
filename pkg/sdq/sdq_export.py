"""
sdq_export.py
Trajectory export and comparison module for the SDQ optimization toolkit.

This module handles all export operations including:
- Append-streamed CSV writing of trajectory records
- Reading trajectory CSV files back into records
- Summarizing and comparing several runs
- Best-run selection across a learning-rate sweep
- Formatted Excel export of a comparison table

CSV schema (fixed): iter,objective,grad_norm,alpha,test_accuracy,flag
Empty test_accuracy cells mean the iteration was not evaluated.

Dependencies:
- pandas: For CSV writing/reading and the comparison table
- openpyxl: For Excel file generation

Version: 1.0.0
"""

import os
import math
import logging
from typing import Iterable, List, Optional, Sequence

import pandas as pd
from pandas import DataFrame
from openpyxl import Workbook
from openpyxl.styles import Font, PatternFill, Alignment

from .sdq_errors import DataFormatError, InvalidInputError
from .sdq_optim import RunFlag, TrajectoryRecord

CSV_COLUMNS = ['iter', 'objective', 'grad_norm', 'alpha', 'test_accuracy', 'flag']
SUMMARY_COLUMNS = [
    'run', 'iterations', 'final_flag',
    'final_objective', 'best_objective',
    'final_accuracy', 'best_accuracy',
]
FLUSH_EVERY = 1000
LINE_TERMINATOR = '\n'

# Excel formatting constants
HEADER_FILL_COLOR = 'D3D3D3'
MAX_COLUMN_WIDTH = 50
SUMMARY_SHEET = 'Summary'


def _cell(value: float) -> object:
    # NaN must survive as text, pandas would write it as an empty cell
    value = float(value)
    return 'nan' if math.isnan(value) else value


def _record_row(record: TrajectoryRecord) -> list:
    accuracy = None if record.test_accuracy is None else float(record.test_accuracy)
    return [
        int(record.iter),
        _cell(record.objective),
        _cell(record.grad_norm),
        _cell(record.alpha),
        accuracy,
        record.flag.value,
    ]


class TrajectoryCsvWriter:
    """
    Append-streamed CSV writer.

    The header is written on open and rows are flushed in chunks, so an
    interrupted run leaves a valid CSV prefix on disk.
    """

    def __init__(self, path: str, flush_every: int = FLUSH_EVERY):
        self.path = path
        self.flush_every = max(1, int(flush_every))
        self._buffer: List[list] = []

    def __enter__(self) -> 'TrajectoryCsvWriter':
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        DataFrame(columns=CSV_COLUMNS).to_csv(self.path, index=False, lineterminator=LINE_TERMINATOR)
        return self

    def append(self, record: TrajectoryRecord) -> None:
        self._buffer.append(_record_row(record))
        if len(self._buffer) >= self.flush_every:
            self.flush()

    def flush(self) -> None:
        if not self._buffer:
            return
        frame = DataFrame(self._buffer, columns=CSV_COLUMNS, dtype=object)
        frame.to_csv(self.path, mode='a', header=False, index=False,
                     na_rep='', lineterminator=LINE_TERMINATOR)
        self._buffer = []

    def __exit__(self, exc_type, exc, tb) -> None:
        self.flush()


def write_csv(records: Sequence[TrajectoryRecord], path: str) -> None:
    """
    Write trajectory records to a CSV file.

    Raises:
        InvalidInputError: records is empty
        OSError: the path is not writable
    """
    if not records:
        raise InvalidInputError(f"refusing to write an empty trajectory to {path}")
    with TrajectoryCsvWriter(path) as writer:
        for record in records:
            writer.append(record)
    logging.info(f"Saved {len(records):,} records to CSV file: {path}")


def _read_frame(path: str) -> DataFrame:
    frame = pd.read_csv(path, dtype={'flag': str}, float_precision='round_trip')
    if list(frame.columns) != CSV_COLUMNS:
        raise DataFormatError(f"{path}: unexpected header {list(frame.columns)}, expected {CSV_COLUMNS}")
    return frame


def read_csv(path: str) -> List[TrajectoryRecord]:
    """Read a trajectory CSV written by write_csv back into records."""
    frame = _read_frame(path)
    records = []
    for row in frame.itertuples(index=False):
        accuracy = None if pd.isna(row.test_accuracy) else float(row.test_accuracy)
        records.append(TrajectoryRecord(
            iter=int(row.iter),
            objective=float(row.objective),
            grad_norm=float(row.grad_norm),
            alpha=float(row.alpha),
            test_accuracy=accuracy,
            flag=RunFlag(row.flag),
        ))
    return records


def _summarize(label: str, frame: DataFrame) -> dict:
    objective = pd.to_numeric(frame['objective'], errors='coerce')
    finite_objective = objective[objective.abs() != float('inf')].dropna()
    accuracy = frame['test_accuracy'].dropna()
    return {
        'run': label,
        'iterations': int(frame['iter'].iloc[-1]) if len(frame) else 0,
        'final_flag': frame['flag'].iloc[-1] if len(frame) else None,
        'final_objective': float(objective.iloc[-1]) if len(frame) else float('nan'),
        'best_objective': float(finite_objective.min()) if len(finite_objective) else float('nan'),
        'final_accuracy': float(accuracy.iloc[-1]) if len(accuracy) else float('nan'),
        'best_accuracy': float(accuracy.max()) if len(accuracy) else float('nan'),
    }


def compare_runs(paths: Iterable[str], labels: Optional[Sequence[str]] = None) -> DataFrame:
    """
    Summary table with one row per run CSV.

    Args:
        paths: Trajectory CSV files
        labels: Optional run labels (default: file name without extension)

    Returns:
        DataFrame: Columns run, iterations, final_flag, final/best objective,
        final/best test accuracy
    """
    paths = list(paths)
    if labels is None:
        labels = [os.path.splitext(os.path.basename(p))[0] for p in paths]
    if len(labels) != len(paths):
        raise InvalidInputError(f"{len(labels)} labels given for {len(paths)} runs")

    rows = [_summarize(label, _read_frame(path)) for label, path in zip(labels, paths)]
    logging.info(f"Compared {len(rows)} runs")
    return DataFrame(rows, columns=SUMMARY_COLUMNS)


def select_best(summary: DataFrame) -> pd.Series:
    """
    Best run of a comparison table: highest final test accuracy, ties broken
    by lower final objective. Without accuracies, the lowest final objective wins.
    """
    if summary.empty:
        raise InvalidInputError("cannot select from an empty comparison table")
    if summary['final_accuracy'].notna().any():
        ordered = summary.sort_values(['final_accuracy', 'final_objective'],
                                      ascending=[False, True], na_position='last', kind='mergesort')
    else:
        ordered = summary.sort_values('final_objective', ascending=True,
                                      na_position='last', kind='mergesort')
    return ordered.iloc[0]


def export_summary_excel(summary: DataFrame, filename: str) -> None:
    """
    Export a comparison table to a formatted Excel workbook.

    The sheet gets a bold grey header, a frozen header row, an autofilter
    and column widths fitted to the content.

    Raises:
        InvalidInputError: filename does not end in .xlsx
    """
    if not filename.endswith('.xlsx'):
        raise InvalidInputError(f"Excel summary must be an .xlsx file, got {filename}")

    workbook = Workbook()
    worksheet = workbook.active
    worksheet.title = SUMMARY_SHEET

    _write_data_to_sheet(worksheet, summary)
    _apply_sheet_formatting(worksheet, summary)

    workbook.save(filename)
    workbook.close()
    logging.info(f"Excel file saved successfully: {filename}")
    logging.info(f"Total rows exported: {len(summary):,}")


def _write_data_to_sheet(worksheet, df: DataFrame) -> None:
    """Write DataFrame data to worksheet."""
    for col_num, column_title in enumerate(df.columns, 1):
        worksheet.cell(row=1, column=col_num).value = column_title

    for row_num, row_data in enumerate(df.itertuples(index=False), 2):
        for col_num, value in enumerate(row_data, 1):
            if isinstance(value, float) and not math.isfinite(value):
                value = None if math.isnan(value) else str(value)
            worksheet.cell(row=row_num, column=col_num).value = value


def _apply_sheet_formatting(worksheet, df: DataFrame) -> None:
    """Apply formatting to the worksheet."""
    worksheet.freeze_panes = 'A2'

    header_font = Font(bold=True)
    header_fill = PatternFill(start_color=HEADER_FILL_COLOR, end_color=HEADER_FILL_COLOR, fill_type='solid')
    for cell in worksheet[1]:
        cell.font = header_font
        cell.fill = header_fill
        cell.alignment = Alignment(horizontal='center', vertical='center')

    worksheet.auto_filter.ref = worksheet.dimensions

    for i, column in enumerate(df.columns):
        column_cells = [worksheet.cell(row=r, column=i + 1) for r in range(1, len(df) + 2)]
        max_length = max(len(str(cell.value or '')) for cell in column_cells) + 2
        col_letter = worksheet.cell(row=1, column=i + 1).column_letter
        worksheet.column_dimensions[col_letter].width = min(max_length, MAX_COLUMN_WIDTH)
