"""Reading and atomically writing series, tables and JSON artifacts."""

from __future__ import annotations

import json
import os
import tempfile
from io import StringIO
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

from ssa_changepoint.errors import ValidationError
from ssa_changepoint.timeseries import TimeSeries

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from ssa_changepoint.synth import SynthDataset

FORMAT_VERSION = 1
FLOAT_FORMAT = "%.17g"


def atomic_write_bytes(path: Path, payload: bytes) -> Path:
    """Write ``payload`` to a temporary sibling file, then rename it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        dir=path.parent, prefix=f".{path.name}.", suffix=".tmp"
    )
    tmp_path = Path(tmp_name)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        tmp_path.replace(path)
    except BaseException:
        tmp_path.unlink(missing_ok=True)
        raise
    return path


def atomic_write_text(path: Path, text: str) -> Path:
    """Atomically write UTF-8 text with Unix line endings."""
    return atomic_write_bytes(path, text.encode())


def write_frame(path: Path, frame: pd.DataFrame) -> Path:
    """Write a table as CSV with round-trippable float formatting."""
    buffer = StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return atomic_write_text(path, buffer.getvalue())


def write_json(path: Path, payload: dict[str, Any]) -> Path:
    """Write a JSON artifact stamped with the format version."""
    document = {"format_version": FORMAT_VERSION, **payload}
    text = json.dumps(document, indent=2, allow_nan=False) + "\n"
    return atomic_write_text(path, text)


def read_json(path: Path) -> dict[str, Any]:
    """Read a JSON artifact and check its format version.

    Raises:
        ValidationError: If the file is not a JSON object or its format version
            is not supported.
    """
    document = json.loads(path.read_text())
    if not isinstance(document, dict):
        msg = f"{path} does not contain a JSON object"
        raise ValidationError(msg)
    version = document.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        msg = f"{path} has format_version {version}, expected {FORMAT_VERSION}"
        raise ValidationError(msg)
    return document


def _is_numeric(values: pd.Series) -> bool:
    return bool(pd.to_numeric(values, errors="coerce").notna().all())


def read_series_csv(path: Path) -> TimeSeries:
    """Read a T x D CSV (one row per time point) into a series.

    A first row that is not entirely numeric is taken as the channel names.

    Raises:
        ValidationError: If any value after the header is not numeric.
    """
    raw = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=True)
    if raw.empty:
        msg = f"{path} holds no samples"
        raise ValidationError(msg)
    names = None
    if not _is_numeric(raw.iloc[0]):
        names = [str(name).strip() for name in raw.iloc[0]]
        raw = raw.iloc[1:]
    values = raw.apply(pd.to_numeric, errors="coerce")
    if values.isna().to_numpy().any():
        row = int(np.flatnonzero(values.isna().to_numpy().any(axis=1))[0])
        msg = f"{path}: non-numeric value in data row {row + 1}"
        raise ValidationError(msg)
    samples = values.to_numpy(dtype=np.float64)
    return TimeSeries.from_samples(samples, channel_names=names)


def series_frame(series: TimeSeries) -> pd.DataFrame:
    """T x D table with one column per channel."""
    names = series.channel_names or tuple(f"x{i}" for i in range(series.n_channels))
    return pd.DataFrame(series.samples(), columns=list(names))


def write_series_csv(path: Path, series: TimeSeries) -> Path:
    """Write a series as a T x D CSV with a header row."""
    return write_frame(path, series_frame(series))


def write_dataset(
    directory: Path, dataset: SynthDataset, stem: str = "series"
) -> tuple[Path, Path]:
    """Write a generated dataset as CSV plus its JSON ground-truth sidecar."""
    csv_path = write_series_csv(directory / f"{stem}.csv", dataset.series)
    json_path = write_json(directory / f"{stem}.json", dataset.sidecar())
    return csv_path, json_path


def read_truth(path: Path, n_boundaries: int) -> NDArray[np.bool_]:
    """Boundary flags from a sidecar listing ``true_changepoints``.

    Raises:
        ValidationError: If a change point lies outside 0..n_boundaries-1.
    """
    document = read_json(path)
    flags = np.zeros(n_boundaries, dtype=bool)
    for index in document.get("true_changepoints", []):
        if not 0 <= int(index) < n_boundaries:
            msg = f"{path}: change point {index} outside 0..{n_boundaries - 1}"
            raise ValidationError(msg)
        flags[int(index)] = True
    return flags
