"""Result persistence: per-repeat raw CSVs, aggregated CSVs with
confidence bands, run manifests, and numerical-failure snapshots.

All text output is deterministic: floats are written with shortest
round-trip repr, null metrics as empty fields, and rows in a fixed order,
so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, SimulationConfig, config_to_mapping
from .game import RewardScheme
from .metrics import METRIC_NAMES, AggregateSeries, aggregate_ci, rolling_mean

RAW_HEADER = ("episode", "repeat", "mode", "scheme", "pop_size") + METRIC_NAMES
AGGREGATE_HEADER = ("episode", "metric", "mean", "ci_low", "ci_high", "mode")


def format_cell(value) -> str:
    """Shortest round-trip float text; nulls serialize as empty fields."""
    value = float(value)
    if math.isnan(value):
        return ""
    return repr(value)


def parse_cell(text: str) -> float:
    return math.nan if text == "" else float(text)


# ------------------------------------------------------------- raw CSVs


@dataclass
class RawRun:
    """One repeat's per-episode metric table plus its identifying echo."""

    mode: str
    scheme: int
    pop_size: int
    repeat: int
    table: np.ndarray  # (episodes, len(METRIC_NAMES))


def write_raw_csv(path, table: np.ndarray, cfg: SimulationConfig, repeat: int) -> None:
    meta = [str(repeat), cfg.mode.value, str(cfg.scheme.value), str(cfg.pop_size)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RAW_HEADER)
        for episode in range(table.shape[0]):
            row = [str(episode), *meta]
            row.extend(format_cell(v) for v in table[episode])
            writer.writerow(row)


def read_raw_csv(path) -> RawRun:
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != RAW_HEADER:
            raise ConfigError(f"{path}: unexpected header {header!r}")
        rows = list(reader)
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    meta = rows[0][1:5]
    table = np.empty((len(rows), len(METRIC_NAMES)))
    for i, row in enumerate(rows):
        if len(row) != len(RAW_HEADER):
            raise ConfigError(f"{path}: row {i + 1} has {len(row)} fields")
        if int(row[0]) != i:
            raise ConfigError(f"{path}: episodes not contiguous at row {i + 1}")
        if row[1:5] != meta:
            raise ConfigError(f"{path}: repeat/mode/scheme/pop_size change at row {i + 1}")
        table[i] = [parse_cell(v) for v in row[5:]]
    return RawRun(mode=meta[1], scheme=int(meta[2]), pop_size=int(meta[3]),
                  repeat=int(meta[0]), table=table)


# ------------------------------------------------------------ aggregates


def aggregate_tables(tables: list[np.ndarray]) -> dict[str, AggregateSeries]:
    """Roll each repeat's metric series, then build the cross-repeat
    confidence band. Needs >= 2 repeats of equal length."""
    if len(tables) < 2:
        raise ConfigError(f"aggregation needs >= 2 repeats, got {len(tables)}")
    episodes = tables[0].shape[0]
    for t in tables:
        if t.shape != (episodes, len(METRIC_NAMES)):
            raise ConfigError("repeats disagree on episode count or metric set")
    out = {}
    for m, name in enumerate(METRIC_NAMES):
        rolled = np.stack([rolling_mean(t[:, m]) for t in tables])
        out[name] = aggregate_ci(rolled)
    return out


def write_aggregate_csv(path, series_by_metric: dict[str, AggregateSeries],
                        mode_label: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_HEADER)
        for name in METRIC_NAMES:
            agg = series_by_metric[name]
            for episode in range(agg.mean.shape[0]):
                writer.writerow([
                    str(episode), name,
                    format_cell(agg.mean[episode]),
                    format_cell(agg.ci_low[episode]),
                    format_cell(agg.ci_high[episode]),
                    mode_label,
                ])


def read_aggregate_csv(path) -> tuple[str, dict[str, AggregateSeries]]:
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != AGGREGATE_HEADER:
            raise ConfigError(f"{path}: unexpected header {header!r}")
        columns: dict[str, list[list[float]]] = {}
        mode_label = None
        for row in reader:
            episode, name, mean, lo, hi, mode_label = row
            columns.setdefault(name, []).append(
                [parse_cell(mean), parse_cell(lo), parse_cell(hi)])
    out = {}
    for name, rows in columns.items():
        arr = np.array(rows)
        out[name] = AggregateSeries(mean=arr[:, 0], ci_low=arr[:, 1], ci_high=arr[:, 2])
    return mode_label, out


# -------------------------------------------------------------- manifest


def scheme_constants(scheme: RewardScheme) -> dict:
    return {
        "punisher_cost": scheme.punisher_cost,
        "punished_penalty": scheme.punished_penalty,
        "just_bonus": scheme.just_bonus,
        "net_just_delta": scheme.just_bonus - scheme.punisher_cost,
        "just_rep_delta": scheme.just_rep_delta,
        "unjust_rep_delta": scheme.unjust_rep_delta,
        "coop_rep_delta": scheme.coop_rep_delta,
        "defect_rep_delta": scheme.defect_rep_delta,
    }


def manifest_variant(label: str, cfg: SimulationConfig, config_index: int,
                     repeats: int) -> dict:
    """One experiment variant's manifest entry: a full config echo plus
    the derived per-repeat spawn keys and output file names."""
    return {
        "label": label,
        "config_index": config_index,
        "config": config_to_mapping(cfg),
        "scheme_constants": scheme_constants(cfg.scheme),
        "spawn_keys": [[config_index, r] for r in range(repeats)],
        "raw_files": [raw_file_name(label, r) for r in range(repeats)],
        "aggregate_file": aggregate_file_name(label),
    }


def raw_file_name(label: str, repeat: int) -> str:
    return f"{label}_repeat{repeat:02d}.csv"


def aggregate_file_name(label: str) -> str:
    return f"{label}_aggregate.csv"


def new_manifest(command: str, master_seed: int, repeats: int,
                 variants: list[dict]) -> dict:
    return {
        "version": __version__,
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "finished_utc": None,
        "master_seed": master_seed,
        "repeats": repeats,
        "variants": variants,
    }


def write_manifest(path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=False)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def mark_finished(path) -> None:
    manifest = read_manifest(path)
    manifest["finished_utc"] = datetime.now(timezone.utc).isoformat()
    write_manifest(path, manifest)


# ------------------------------------------------------------- snapshots


def write_failure_snapshot(directory, label: str, repeat: int,
                           cfg: SimulationConfig, snapshot: dict,
                           message: str) -> Path:
    """Persist the population state attached to a numerical failure:
    an .npz of every parameter array plus a JSON context."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = {}
    for key, value in snapshot.items():
        if isinstance(value, dict):
            for pname, arr in value.items():
                arrays[f"{key}.{pname}"] = arr
        else:
            arrays[key] = value
    stem = f"failure_{label}_repeat{repeat:02d}"
    npz_path = directory / f"{stem}.npz"
    np.savez(npz_path, **arrays)
    context = {
        "label": label,
        "repeat": repeat,
        "message": message,
        "config": config_to_mapping(cfg),
        "arrays": sorted(arrays),
    }
    with open(directory / f"{stem}.json", "w", encoding="utf-8") as fh:
        json.dump(context, fh, indent=2)
        fh.write("\n")
    return npz_path
