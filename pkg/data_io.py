"""Matrix CSV reading and result writing (CSV, JSON, metadata sidecars).

Matrix files are headerless, comma-separated, one row per line. Every float
written out is rounded to 12 significant digits.
"""

import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from config import FLOAT_FORMAT, SIGNIFICANT_DIGITS
from errors import InvalidInput
from linalg import as_matrix

logger = logging.getLogger(__name__)


def read_matrix_csv(path: str | Path, name: str = "matrix") -> np.ndarray:
    """Load a headerless numeric CSV into a 2-D float array."""
    try:
        frame = pd.read_csv(path, header=None, dtype=float, skipinitialspace=True)
    except FileNotFoundError as exc:
        raise InvalidInput(f"{name} file not found: {path}") from exc
    except pd.errors.EmptyDataError as exc:
        raise InvalidInput(f"{name} file {path} is empty") from exc
    except (ValueError, pd.errors.ParserError) as exc:
        raise InvalidInput(f"{name} file {path} is not a numeric CSV matrix: {exc}") from exc
    logger.debug("read %s %s with shape %s", name, path, frame.shape)
    return as_matrix(frame.to_numpy(), name)


def format_float(x: float) -> float:
    """Round to SIGNIFICANT_DIGITS significant digits."""
    return float(f"{x:.{SIGNIFICANT_DIGITS}g}")


def rounded(obj):
    """Recursively round floats (and numpy scalars/arrays) for output."""
    if isinstance(obj, dict):
        return {k: rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return rounded(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format_float(x) if np.isfinite(x) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(rounded(obj), indent=2) + "\n"


def _emit(text: str, path: str | Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
        logger.info("wrote %s", path)


def write_json(obj, path: str | Path | None = None) -> str:
    """Write ``obj`` as rounded JSON to ``path`` (stdout when None); returns the text."""
    text = dumps_json(obj)
    _emit(text, path)
    return text


def frame_to_csv(frame: pd.DataFrame, header: bool = True) -> str:
    return frame.to_csv(index=False, header=header, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_csv(frame: pd.DataFrame, path: str | Path | None = None, header: bool = True) -> str:
    """Write a DataFrame as CSV with 12-significant-digit floats; returns the text."""
    text = frame_to_csv(frame, header)
    _emit(text, path)
    return text


def metadata_path(path: str | Path) -> Path:
    """Sidecar holding the metadata block of a CSV output: ``<path>.meta.json``."""
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_metadata(metadata: dict, path: str | Path) -> Path:
    sidecar = metadata_path(path)
    write_json(metadata, sidecar)
    return sidecar
