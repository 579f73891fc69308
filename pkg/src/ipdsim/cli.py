"""Command-line front end.

Subcommands: `run` (presets, config files, flag overrides, parallel
repeats, CSV/manifest output), `aggregate` (rebuild confidence-band CSVs
from raw per-repeat files), `search` (random hyperparameter search), and
`presets list`.

Exit codes: 0 success; 2 invalid configuration; 3 numerical failure, with
a population snapshot written next to the outputs; 4 missing input files.
"""

from __future__ import annotations

import csv
import math
import os
import sys
import time
from multiprocessing import get_context
from pathlib import Path

import click

from .config import ConfigError, config_from_mapping, config_to_mapping, load_config_file
from .dqn import NumericalFailure
from .metrics import metric_table
from .orchestrator import run_simulation
from .presets import PRESETS, PresetVariant, get_preset
from .runio import (
    aggregate_file_name,
    aggregate_tables,
    manifest_variant,
    mark_finished,
    new_manifest,
    raw_file_name,
    read_manifest,
    read_raw_csv,
    write_aggregate_csv,
    write_failure_snapshot,
    write_manifest,
    write_raw_csv,
)
from .search import COMBO_FIELDS, SearchSpace, rank_trials, run_trial, sample_all

OUTPUT_ROOT_ENV = "IPDSIM_OUTPUT_ROOT"


def _fail(code: int, message: str):
    click.echo(message, err=True)
    sys.exit(code)


def _resolve_out(out: str | None, name: str) -> Path:
    if out:
        return Path(out)
    root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    return Path(root) / name


@click.group()
def main():
    """Iterated prisoner's dilemma learning experiments."""


# ------------------------------------------------------------------ run


def _flag_overrides(mode, scheme, episodes, rounds, pop_size, hidden_dim, seed,
                    rep_sources, rep_in_play_state, rep_in_punish_state) -> dict:
    flags = {}
    if mode is not None:
        flags["mode"] = mode
    if scheme is not None:
        flags["scheme"] = scheme
    for key, value in (("episodes", episodes), ("rounds", rounds),
                       ("pop_size", pop_size), ("hidden_dim", hidden_dim),
                       ("seed", seed)):
        if value is not None:
            flags[key] = value
    if rep_sources is not None:
        flags["rep_sources"] = rep_sources
    if rep_in_play_state is not None:
        flags["rep_in_play_state"] = rep_in_play_state
    if rep_in_punish_state is not None:
        flags["rep_in_punish_state"] = rep_in_punish_state
    return flags


def _build_variants(preset_name, base, flags):
    """Merge precedence: preset variant < config file < CLI flags, except
    that a preset's own mode/encoding keys define the variant and are not
    overridable by --mode."""
    if preset_name is not None:
        if "mode" in flags:
            raise ConfigError("--mode conflicts with --preset; pick one")
        preset = get_preset(preset_name)
        variants = [PresetVariant(v.label, {**base, **v.overrides, **flags})
                    for v in preset.variants]
        return preset, variants
    merged = {**base, **flags}
    if "mode" not in merged:
        raise ConfigError("need --mode, --preset, or a config file with a mode")
    label = str(merged["mode"]).strip().upper().replace("_", "-")
    return None, [PresetVariant(label, merged)]


def _repeat_task(args):
    """One repeat, runnable in a worker process; returns an ('ok', ...) or
    ('failure', ...) tuple instead of raising across the pool boundary."""
    out_dir, label, mapping, config_index, repeat = args
    cfg = config_from_mapping(mapping).with_repeat(config_index, repeat)
    started = time.perf_counter()
    try:
        result = run_simulation(cfg)
    except NumericalFailure as err:
        return ("failure", label, repeat, config_to_mapping(cfg), err.snapshot, str(err))
    table = metric_table(result.counts)
    path = Path(out_dir) / raw_file_name(label, repeat)
    write_raw_csv(path, table, cfg, repeat)
    return ("ok", label, repeat, time.perf_counter() - started)


def _handle_failure(out_dir: Path, outcome) -> None:
    _, label, repeat, mapping, snapshot, message = outcome
    cfg = config_from_mapping(mapping)
    path = write_failure_snapshot(out_dir / "failures", label, repeat, cfg,
                                  snapshot, message)
    _fail(3, f"numerical failure in {label} repeat {repeat}: {message}\n"
             f"snapshot: {path}")


@main.command(name="run")
@click.option("--preset", "preset_name", default=None,
              help="named experiment suite (see `presets list`)")
@click.option("--config", "config_path", type=click.Path(exists=False), default=None,
              help="YAML config file; flags override its values")
@click.option("--mode", default=None, help="mechanism combination, e.g. TPP-S")
@click.option("--scheme", default=None, help="punishment reward scheme, 1 or 2")
@click.option("--episodes", type=int, default=None)
@click.option("--rounds", type=int, default=None)
@click.option("--pop-size", type=int, default=None)
@click.option("--repeats", type=int, default=None, help="independent repeats (default 20)")
@click.option("--seed", type=int, default=None, help="master seed (default 0)")
@click.option("--hidden-dim", type=int, default=None)
@click.option("--rep-sources", default=None,
              type=click.Choice(["both", "play-only", "punish-only"]))
@click.option("--rep-in-play-state", type=bool, default=None)
@click.option("--rep-in-punish-state", type=bool, default=None)
@click.option("--jobs", type=int, default=1, help="parallel repeat processes")
@click.option("--out", default=None, help="output directory")
def run_command(preset_name, config_path, mode, scheme, episodes, rounds, pop_size,
                repeats, seed, hidden_dim, rep_sources, rep_in_play_state,
                rep_in_punish_state, jobs, out):
    """Run an experiment: repeats x configs, raw and aggregate CSVs plus a
    manifest underneath the output directory."""
    try:
        base = load_config_file(config_path) if config_path else {}
        flags = _flag_overrides(mode, scheme, episodes, rounds, pop_size,
                                hidden_dim, seed, rep_sources,
                                rep_in_play_state, rep_in_punish_state)
        preset, variants = _build_variants(preset_name, base, flags)
        configs = [config_from_mapping(v.overrides) for v in variants]
    except (ConfigError, OSError) as err:
        _fail(2, f"config error: {err}")

    n_repeats = repeats if repeats is not None else (preset.repeats if preset else 20)
    if n_repeats < 1:
        _fail(2, "config error: --repeats must be >= 1")
    master_seed = configs[0].seed

    out_dir = _resolve_out(out, preset_name or variants[0].label)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = new_manifest(
        command="run", master_seed=master_seed, repeats=n_repeats,
        variants=[manifest_variant(v.label, cfg, i, n_repeats)
                  for i, (v, cfg) in enumerate(zip(variants, configs))])
    manifest_path = out_dir / "manifest.json"
    write_manifest(manifest_path, manifest)
    click.echo(f"manifest: {manifest_path}")

    tasks = [(str(out_dir), v.label, config_to_mapping(cfg), i, r)
             for i, (v, cfg) in enumerate(zip(variants, configs))
             for r in range(n_repeats)]
    if jobs > 1:
        with get_context("fork").Pool(jobs) as pool:
            for outcome in pool.imap(_repeat_task, tasks):
                if outcome[0] == "failure":
                    pool.terminate()
                    _handle_failure(out_dir, outcome)
                _, label, r, dt = outcome
                click.echo(f"[{label}] repeat {r}: {dt:.1f}s")
    else:
        for task in tasks:
            outcome = _repeat_task(task)
            if outcome[0] == "failure":
                _handle_failure(out_dir, outcome)
            _, label, r, dt = outcome
            click.echo(f"[{label}] repeat {r}: {dt:.1f}s")

    if n_repeats >= 2:
        for variant in variants:
            tables = [read_raw_csv(out_dir / raw_file_name(variant.label, r)).table
                      for r in range(n_repeats)]
            series = aggregate_tables(tables)
            agg_path = out_dir / aggregate_file_name(variant.label)
            write_aggregate_csv(agg_path, series, variant.label)
            click.echo(f"[{variant.label}] aggregate: {agg_path}")
    else:
        click.echo("single repeat: skipping aggregation (needs >= 2)")
    mark_finished(manifest_path)


# ------------------------------------------------------------- aggregate


@main.command(name="aggregate")
@click.argument("files", nargs=-1, type=click.Path())
@click.option("--manifest", "manifest_path", type=click.Path(), default=None,
              help="rebuild every aggregate listed in a run manifest")
@click.option("--out", default=None,
              help="output file (FILES mode) or directory (manifest mode)")
def aggregate_command(files, manifest_path, out):
    """Rebuild aggregate CSVs from raw per-repeat CSVs."""
    if manifest_path is None and not files:
        _fail(2, "config error: pass raw CSV files or --manifest")
    if manifest_path is not None:
        root = Path(manifest_path).parent
        try:
            manifest = read_manifest(manifest_path)
        except (OSError, ValueError) as err:
            _fail(2, f"config error: cannot read manifest: {err}")
        out_root = Path(out) if out else root
        out_root.mkdir(parents=True, exist_ok=True)
        missing = [str(root / name) for variant in manifest["variants"]
                   for name in variant["raw_files"] if not (root / name).exists()]
        if missing:
            _fail(4, "missing repeat files:\n" + "\n".join(missing))
        try:
            for variant in manifest["variants"]:
                tables = [read_raw_csv(root / name).table
                          for name in variant["raw_files"]]
                series = aggregate_tables(tables)
                path = out_root / variant["aggregate_file"]
                write_aggregate_csv(path, series, variant["label"])
                click.echo(f"[{variant['label']}] aggregate: {path}")
        except ConfigError as err:
            _fail(2, f"config error: {err}")
        return

    missing = [f for f in files if not Path(f).exists()]
    if missing:
        _fail(4, "missing repeat files:\n" + "\n".join(missing))
    try:
        runs = [read_raw_csv(f) for f in files]
        labels = {r.mode for r in runs}
        if len(labels) > 1:
            raise ConfigError(f"raw files mix modes: {sorted(labels)}")
        label = runs[0].mode
        series = aggregate_tables([r.table for r in runs])
    except ConfigError as err:
        _fail(2, f"config error: {err}")
    path = Path(out) if out else Path(aggregate_file_name(label))
    path.parent.mkdir(parents=True, exist_ok=True)
    write_aggregate_csv(path, series, label)
    click.echo(f"[{label}] aggregate: {path}")


# ---------------------------------------------------------------- search


def _trial_task(args):
    base_mapping, combo, trial, repeats = args
    base = config_from_mapping(base_mapping)
    return run_trial(base, combo, trial, repeats)


@main.command(name="search")
@click.option("--trials", type=int, default=100, show_default=True)
@click.option("--repeats", type=int, default=3, show_default=True)
@click.option("--episodes", type=int, default=500, show_default=True)
@click.option("--mode", default="TPPDP-S", show_default=True)
@click.option("--scheme", default=None)
@click.option("--pop-size", type=int, default=5, show_default=True)
@click.option("--rounds", type=int, default=10, show_default=True)
@click.option("--hidden-dim", type=int, default=128, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1)
@click.option("--out", default=None, help="results CSV path")
def search_command(trials, repeats, episodes, mode, scheme, pop_size, rounds,
                   hidden_dim, seed, jobs, out):
    """Random hyperparameter search, ranked by mean societal reward."""
    mapping = {"mode": mode, "pop_size": pop_size, "episodes": episodes,
               "rounds": rounds, "hidden_dim": hidden_dim, "seed": seed}
    if scheme is not None:
        mapping["scheme"] = scheme
    try:
        if trials < 1:
            raise ConfigError("--trials must be >= 1")
        base = config_from_mapping(mapping)
        combos = sample_all(SearchSpace(), trials, seed)
    except ConfigError as err:
        _fail(2, f"config error: {err}")

    tasks = [(mapping, combo, i, repeats) for i, combo in enumerate(combos)]
    if jobs > 1:
        with get_context("fork").Pool(jobs) as pool:
            results = list(pool.imap(_trial_task, tasks))
    else:
        results = []
        for task in tasks:
            res = _trial_task(task)
            if math.isnan(res.score):
                click.echo(f"trial {res.trial}: numerical failure")
            else:
                click.echo(f"trial {res.trial}: score {res.score:.2f}")
            results.append(res)
    ranked = rank_trials(results)

    path = Path(out) if out else _resolve_out(None, "search") / "search_results.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("rank", "trial") + COMBO_FIELDS + ("mean_societal_reward",))
        for rank, res in enumerate(ranked):
            row = [str(rank), str(res.trial)]
            row.extend(repr(res.combo[f]) if isinstance(res.combo[f], float)
                       else str(res.combo[f]) for f in COMBO_FIELDS)
            row.append("" if math.isnan(res.score) else repr(res.score))
            writer.writerow(row)
    click.echo(f"search results: {path}")
    best = ranked[0]
    if not math.isnan(best.score):
        click.echo(f"best: trial {best.trial} score {best.score:.2f}")


# ---------------------------------------------------------------- presets


@main.group(name="presets")
def presets_group():
    """Inspect named experiment suites."""


@presets_group.command(name="list")
def presets_list():
    """List preset names, sizes, and descriptions."""
    for preset in PRESETS.values():
        click.echo(f"{preset.name:15s} {len(preset.variants):2d} variants x "
                   f"{preset.repeats} repeats   {preset.description}")


if __name__ == "__main__":
    main()
