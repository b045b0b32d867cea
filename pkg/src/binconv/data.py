"""Series ingestion, windowing and the synthetic linear-trend generator."""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np


@dataclass
class SeriesRecord:
    series_id: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError(f"series {self.series_id!r} must be a non-empty 1-d array")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"series {self.series_id!r} contains non-finite values")


@dataclass(frozen=True)
class SplitSpec:
    horizon: int
    context_length: int | None = None

    def __post_init__(self):
        if self.context_length is None:
            object.__setattr__(self, "context_length", 3 * self.horizon)
        if self.horizon < 1 or self.context_length < 1:
            raise ValueError("horizon and context_length must be >= 1")


@dataclass(frozen=True)
class SynthSpec:
    length: int = 144
    intercept: float = 100.0
    slope: float = 1.5
    noise_std: float = 1e-2
    train_length: int = 120
    context_length: int = 72
    horizon: int = 24


class CsvFormatError(ValueError):
    pass


def load_csv(path) -> list[SeriesRecord]:
    """Read long-format ``series_id,value`` rows, grouped in first-seen order."""
    groups: dict[str, list[float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvFormatError(f"{path}: empty file")
        if [h.strip() for h in header] != ["series_id", "value"]:
            raise CsvFormatError(f"{path}: expected header 'series_id,value', got {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise CsvFormatError(f"{path}: row {lineno} has {len(row)} fields, expected 2")
            sid, raw = row[0].strip(), row[1].strip()
            try:
                v = float(raw)
            except ValueError:
                raise CsvFormatError(f"{path}: row {lineno}: non-numeric value {raw!r}") from None
            if not math.isfinite(v):
                raise CsvFormatError(f"{path}: row {lineno}: non-finite value {raw!r}")
            groups.setdefault(sid, []).append(v)
    if not groups:
        raise CsvFormatError(f"{path}: no data rows")
    return [SeriesRecord(sid, np.array(vals)) for sid, vals in groups.items()]


def write_csv(records, path) -> None:
    """Write records in the format :func:`load_csv` reads (atomically)."""
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["series_id", "value"])
            for rec in records:
                for v in rec.values:
                    w.writerow([rec.series_id, repr(float(v))])
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def synth_linear_trend(spec: SynthSpec = SynthSpec(), seed: int = 0, series_id: str = "trend") -> SeriesRecord:
    """``(intercept + slope * t) * (1 + noise_t)`` with Gaussian ``noise_t``."""
    t = np.arange(spec.length, dtype=np.float64)
    noise = np.random.default_rng(seed).normal(0.0, 1.0, spec.length) * spec.noise_std
    return SeriesRecord(series_id, (spec.intercept + spec.slope * t) * (1.0 + noise))


def train_test_split(record: SeriesRecord, train_length: int):
    n = record.values.size
    if not 0 < train_length < n:
        raise ValueError(f"train_length {train_length} must be in 1..{n - 1}")
    return record.values[:train_length].copy(), record.values[train_length:].copy()


def dataset_scale(values) -> float:
    """Mean absolute value over a whole training set (1.0 if all zero)."""
    v = np.concatenate([np.ravel(np.asarray(x, dtype=np.float64)) for x in values]) if isinstance(values, (list, tuple)) else np.ravel(values)
    s = float(np.mean(np.abs(v))) if v.size else 0.0
    return s if s > 0 else 1.0


def synth_panel(n_series: int = 50, length: int = 200, period: int = 7, seed: int = 0) -> list[SeriesRecord]:
    """Positive series with level, trend, weekly seasonality and noise.

    Stand-in for a benchmark subset when the real files are not at hand.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    out = []
    for i in range(n_series):
        level = rng.uniform(50, 5000)
        slope = rng.uniform(-0.002, 0.004) * level
        amp = rng.uniform(0.0, 0.15) * level
        phase = rng.uniform(0, 2 * np.pi)
        walk = np.cumsum(rng.normal(0, 0.01 * level, length))
        y = level + slope * t + amp * np.sin(2 * np.pi * t / period + phase) + walk
        y = np.maximum(y, 0.05 * level)
        out.append(SeriesRecord(f"S{i:03d}", y))
    return out
