"""Named experiment suites.

Each preset is a list of config-mapping variants (merged under any config
file and CLI overrides), so the full comparison grids can be launched with
one flag: the six-mechanism comparison, its scheme-1 variant, the
no-mechanism baseline, the reputation ablations, population-size sweeps,
and the narrow-network variant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import ConfigError
from .game import Mode

# figure legend order
MAIN_MODES = (Mode.TPP_S, Mode.TPP, Mode.DP_S, Mode.DP, Mode.TPPDP_S, Mode.TPPDP)
SELECTION_ABLATION_MODES = (Mode.TPP_S, Mode.DP_S)
POPULATION_SIZES = (5, 10, 15, 20, 25, 30)


@dataclass(frozen=True)
class PresetVariant:
    """One runnable configuration of a preset: a file-name-safe label and
    the config mapping it stands for."""

    label: str
    overrides: dict


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    variants: tuple[PresetVariant, ...]
    repeats: int = 20


def _main_six() -> tuple[PresetVariant, ...]:
    return tuple(PresetVariant(m.value, {"mode": m.value}) for m in MAIN_MODES)


def _scheme1() -> tuple[PresetVariant, ...]:
    return tuple(
        PresetVariant(f"{m.value}_scheme1", {"mode": m.value, "scheme": 1})
        for m in MAIN_MODES
    )


def _baseline_none() -> tuple[PresetVariant, ...]:
    return (PresetVariant(Mode.NONE.value, {"mode": Mode.NONE.value}),)


def _rep_sources() -> tuple[PresetVariant, ...]:
    out = []
    for m in SELECTION_ABLATION_MODES:
        for source in ("both", "play-only", "punish-only"):
            out.append(PresetVariant(
                f"{m.value}_src-{source}",
                {"mode": m.value, "rep_sources": source}))
    return tuple(out)


def _rep_in_states() -> tuple[PresetVariant, ...]:
    out = []
    for m in SELECTION_ABLATION_MODES:
        for in_play in (False, True):
            for in_punish in (False, True):
                out.append(PresetVariant(
                    f"{m.value}_play{int(in_play)}_punish{int(in_punish)}",
                    {"mode": m.value,
                     "rep_in_play_state": in_play,
                     "rep_in_punish_state": in_punish}))
    return tuple(out)


def _pop_sizes() -> tuple[PresetVariant, ...]:
    out = []
    for m in SELECTION_ABLATION_MODES:
        for n in POPULATION_SIZES:
            out.append(PresetVariant(
                f"{m.value}_n{n:02d}", {"mode": m.value, "pop_size": n}))
    return tuple(out)


def _hidden_64() -> tuple[PresetVariant, ...]:
    return tuple(
        PresetVariant(f"{m.value}_h64", {"mode": m.value, "hidden_dim": 64})
        for m in MAIN_MODES
    )


PRESETS: dict[str, Preset] = {
    p.name: p
    for p in (
        Preset("main-six", "all six mechanism combinations, default scheme",
               _main_six()),
        Preset("scheme1", "all six combinations under the net-loss punishment scheme",
               _scheme1()),
        Preset("baseline-none", "no punishment, no selection (random pairing)",
               _baseline_none()),
        Preset("rep-sources", "selection modes with reputation fed by play, "
               "punishment, or both", _rep_sources()),
        Preset("rep-in-states", "selection modes with reputation toggled in the "
               "play and punish inputs", _rep_in_states()),
        Preset("pop-sizes", "selection modes across population sizes 5-30",
               _pop_sizes()),
        Preset("hidden-64", "all six combinations with hidden width 64",
               _hidden_64()),
    )
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
