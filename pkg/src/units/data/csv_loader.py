"""CSV ingestion: one row per timestep, one column per variable, header first.

Parse problems are reported as `DataError` with the 1-based file line (the header is
line 1).
"""

from __future__ import annotations

import logging
import re
from collections.abc import Sequence
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from units.errors import DataError

from .protocol import SPLITS, DatasetSplits, ManifestEntry, TimeSeriesDataset

logger = logging.getLogger(__name__)

DEFAULT_LABEL_COLUMN = "label"
_PARSER_LINE = re.compile(r"line (\d+)")


def read_table(path: Path) -> pd.DataFrame:
    """Read a CSV with every cell as text; ragged or empty files raise `DataError`."""

    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such CSV file: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: the file is empty") from None
    except pd.errors.ParserError as exc:
        match = _PARSER_LINE.search(str(exc))
        line = int(match.group(1)) if match else None
        raise DataError(f"{path}: ragged row ({exc})", line=line) from None
    if frame.empty:
        raise DataError(f"{path}: the file has a header but no data rows")
    short = frame.isna().any(axis=1).to_numpy()
    if short.any():
        row = int(np.argmax(short))
        raise DataError(f"{path}: ragged row (too few fields)", line=row + 2)
    return frame


def numeric_columns(frame: pd.DataFrame, columns: Sequence[str], path: Path) -> np.ndarray:
    """Parse `columns` as floats, naming the first non-numeric cell's line and column."""

    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    out = np.empty((len(frame), len(columns)))
    for j, column in enumerate(columns):
        text = frame[column].str.strip()
        cells = text.to_numpy(dtype=object)
        # object -> float parses each cell with float(), which reads doubles back exactly
        try:
            values = cells.astype(float)
        except ValueError:
            values = np.array([_cell_value(c) for c in cells], dtype=float)
        bad = np.isnan(values)
        if bad.any():
            row = int(np.argmax(bad))
            raise DataError(
                f"{path}: non-numeric value {text.iloc[row]!r} in column {column!r}", line=row + 2
            )
        out[:, j] = values
    return out


def _cell_value(cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        return float("nan")


def read_series_csv(
    path: Path, columns: Optional[Sequence[str]] = None, *, exclude: Sequence[str] = ()
) -> tuple[np.ndarray, list[str]]:
    """Load a (T, v) series; all columns except `exclude` unless `columns` is given."""

    frame = read_table(path)
    names = list(columns) if columns else [c for c in frame.columns if c not in exclude]
    if not names:
        raise DataError(f"{path}: no variable columns")
    return numeric_columns(frame, names, Path(path)), names


def write_series_csv(
    path: Path,
    values: np.ndarray,
    columns: Sequence[str],
    *,
    labels: Optional[np.ndarray] = None,
    label_column: str = DEFAULT_LABEL_COLUMN,
) -> Path:
    """Write a (T, v) series (optionally with a leading label column) as CSV."""

    frame = pd.DataFrame(np.asarray(values), columns=list(columns))
    if labels is not None:
        frame.insert(0, label_column, np.asarray(labels).astype(int))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def window_starts(start: int, stop: int, length: int, stride: int) -> list[int]:
    return list(range(start, stop - length + 1, stride))


def load_csv(path: Path, entry: ManifestEntry, *, patch_size: int = 16) -> DatasetSplits:
    """Cut windows from a CSV file within split-disjoint row intervals.

    Rows are divided into contiguous train/val/test intervals first, and windows never
    cross an interval boundary. Forecast windows are `window + horizon` rows long; the
    tail forms the target. A classify window takes the label of its first row.
    """

    path = Path(path)
    frame = read_table(path)
    label_column = entry.label_column
    if label_column is None and DEFAULT_LABEL_COLUMN in frame.columns:
        label_column = DEFAULT_LABEL_COLUMN
    if entry.kind == "classify" and label_column is None:
        raise DataError(f"{path}: classify dataset {entry.name!r} needs a label column")

    exclude = (label_column,) if label_column else ()
    columns = list(entry.columns) if entry.columns else [
        c for c in frame.columns if c not in exclude
    ]
    if not columns:
        raise DataError(f"{path}: no variable columns")
    values = numeric_columns(frame, columns, path)
    row_labels = None
    if label_column and entry.kind in ("classify", "anomaly"):
        row_labels = numeric_columns(frame, [label_column], path)[:, 0].astype(int)

    spec = entry.task_spec(len(columns), patch_size)
    length = entry.window + spec.horizon_steps
    stride = entry.stride or entry.window
    bounds = entry.split.bounds(len(frame))

    parts: dict[str, TimeSeriesDataset] = {}
    for split in SPLITS:
        lo, hi = bounds[split]
        starts = window_starts(lo, hi, length, stride)
        if not starts:
            continue
        windows = np.stack([values[s : s + length] for s in starts])
        kwargs = {}
        if spec.kind == "forecast":
            kwargs["targets"] = windows[:, entry.window :]
        if spec.kind == "classify":
            kwargs["labels"] = np.array([row_labels[s] for s in starts])
        if spec.kind == "anomaly" and row_labels is not None:
            kwargs["point_labels"] = np.stack([row_labels[s : s + length] for s in starts])
        parts[split] = TimeSeriesDataset(
            entry.name, spec, split, windows[:, : entry.window], **kwargs
        )
    if "train" not in parts:
        raise DataError(
            f"{path}: no training window of {length} rows fits in {bounds['train'][1]} train rows"
        )
    logger.info(
        "loaded %s: %s",
        entry.name,
        ", ".join(f"{s}={len(d)}" for s, d in parts.items()),
    )
    return DatasetSplits(**parts)
