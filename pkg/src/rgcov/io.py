"""CSV and JSON helpers shared by the command line and the study harness."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError

TIME_COLUMNS = ("t", "date", "time", "timestamp")


@dataclass
class Series:
    """A named multivariate series with optional time labels."""

    names: list
    values: np.ndarray
    index: list | None = None


def read_series_csv(path) -> Series:
    """Read a header-plus-rows CSV; a leading time column is kept as labels."""
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError:
        raise
    except Exception as exc:  # malformed content
        raise DataError(f"cannot parse {path}: {exc}") from exc
    if frame.shape[1] == 0 or frame.shape[0] == 0:
        raise DataError(f"{path} holds no data")
    index = None
    first = str(frame.columns[0]).strip().lower()
    if first in TIME_COLUMNS:
        index = frame.iloc[:, 0].astype(str).tolist()
        frame = frame.iloc[:, 1:]
    try:
        values = frame.to_numpy(dtype=float)
    except ValueError as exc:
        raise DataError(f"{path} has non-numeric entries: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path} has missing or non-finite entries")
    return Series([str(c) for c in frame.columns], values, index)


def write_series_csv(path, values, names=None, index=None) -> None:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    names = names or [f"y{i + 1}" for i in range(arr.shape[1])]
    frame = pd.DataFrame(arr, columns=names)
    if index is not None:
        frame.insert(0, "t", index)
    frame.to_csv(path, index=False, float_format="%.17g")


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "to_json"):
        return obj.to_json()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, shortest round-trip float repr."""
    return json.dumps(obj, default=_default, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc


def digest(obj) -> str:
    return hashlib.sha256(dumps(obj).encode()).hexdigest()
