"""Aggregate CSV parsing against the documented experiment schema.

One aggregate file carries a single mechanism combination (constant `mode`
column) and one block of contiguous episodes per metric, metric-major.
Undefined statistics are empty fields and parse to NaN; they must stay NaN
downstream (curve gaps), never zeros.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

AGGREGATE_HEADER = ("episode", "metric", "mean", "ci_low", "ci_high", "mode")


class SchemaError(ValueError):
    """Input file does not match the aggregate CSV contract."""


@dataclass(frozen=True)
class ModeSeries:
    """One mechanism combination's aggregated curve for one metric."""

    mode: str
    episodes: np.ndarray
    mean: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray

    def __len__(self) -> int:
        return self.episodes.shape[0]


def _check_header(path: Path, header: tuple[str, ...]) -> None:
    for i, want in enumerate(AGGREGATE_HEADER):
        got = header[i] if i < len(header) else None
        if got != want:
            raise SchemaError(f"{path}: column {i + 1} is {got!r}, expected {want!r}")
    if len(header) > len(AGGREGATE_HEADER):
        extra = header[len(AGGREGATE_HEADER)]
        raise SchemaError(f"{path}: unexpected extra column {extra!r}")


def _parse_stat(path: Path, line: int, column: str, text: str) -> float:
    if text == "":
        return float("nan")
    try:
        return float(text)
    except ValueError:
        raise SchemaError(
            f"{path}: line {line}: column {column!r} has non-numeric value {text!r}"
        ) from None


def read_metric_series(path: Path | str, metric: str) -> ModeSeries:
    """One metric's curve from one aggregate CSV.

    Validates the full schema of the file, not just the rows used: exact
    header, constant mode column, contiguous episodes within the metric.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        _check_header(path, tuple(next(reader, ())))
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")

    modes = {row[5] for row in rows if len(row) == len(AGGREGATE_HEADER)}
    for i, row in enumerate(rows):
        if len(row) != len(AGGREGATE_HEADER):
            raise SchemaError(f"{path}: line {i + 2} has {len(row)} fields, "
                              f"expected {len(AGGREGATE_HEADER)}")
    if len(modes) != 1:
        raise SchemaError(f"{path}: column 'mode' must be constant, found "
                          f"{sorted(modes)}")

    picked = [(i, row) for i, row in enumerate(rows) if row[1] == metric]
    if not picked:
        available = sorted({row[1] for row in rows})
        raise SchemaError(f"{path}: metric {metric!r} not present; file has "
                          f"{', '.join(available)}")

    episodes = np.empty(len(picked), dtype=np.int64)
    stats = np.empty((len(picked), 3), dtype=np.float64)
    for out_i, (i, row) in enumerate(picked):
        line = i + 2
        try:
            episodes[out_i] = int(row[0])
        except ValueError:
            raise SchemaError(f"{path}: line {line}: column 'episode' has "
                              f"non-numeric value {row[0]!r}") from None
        for j, column in enumerate(("mean", "ci_low", "ci_high")):
            stats[out_i, j] = _parse_stat(path, line, column, row[2 + j])
    if not np.array_equal(episodes, np.arange(len(picked))):
        raise SchemaError(f"{path}: column 'episode' must run 0..{len(picked) - 1} "
                          f"contiguously within metric {metric!r}")

    return ModeSeries(mode=modes.pop(), episodes=episodes,
                      mean=stats[:, 0], ci_low=stats[:, 1], ci_high=stats[:, 2])


def load_series(paths, metric: str) -> list[ModeSeries]:
    """One ModeSeries per input file; modes must be pairwise distinct."""
    series = [read_metric_series(p, metric) for p in paths]
    seen: dict[str, Path] = {}
    for path, s in zip(paths, series):
        if s.mode in seen:
            raise SchemaError(f"mode {s.mode!r} appears in both {seen[s.mode]} "
                              f"and {path}; one curve per mode")
        seen[s.mode] = path
    return series
