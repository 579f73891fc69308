"""Run configuration: mechanism choice, protocol sizes, per-model
hyperparameters, seeding, and validation.

Defaults reproduce the published protocol: populations of 5 agents, 2000
episodes of 10 rounds, hidden width 128, and the per-ability
hyperparameters found by the random search (buffer sizes, learning rates,
epsilon schedules below).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import yaml

from .agents import RepSources, StateEncodingConfig
from .dqn import EpsilonSchedule, TrainerConfig
from .game import Mode, RewardScheme


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class ModelHyperparams:
    """One ability model's training knobs."""

    learning_rate: float
    buffer_capacity: int
    eps_min: float
    decay_fraction: float
    eps_max: float = 0.8889
    gamma: float = 0.9
    batch_size: int = 100
    target_update_interval: int = 200

    def schedule(self, horizon_episodes: int) -> EpsilonSchedule:
        return EpsilonSchedule(
            eps_max=self.eps_max,
            eps_min=self.eps_min,
            decay_fraction=self.decay_fraction,
            horizon_episodes=horizon_episodes,
        )

    def trainer(self) -> TrainerConfig:
        return TrainerConfig(
            learning_rate=self.learning_rate,
            gamma=self.gamma,
            batch_size=self.batch_size,
            target_update_interval=self.target_update_interval,
        )


SELECT_HP = ModelHyperparams(learning_rate=0.01, buffer_capacity=131072,
                             eps_min=0.0001, decay_fraction=0.3)
PLAY_HP = ModelHyperparams(learning_rate=0.1, buffer_capacity=131072,
                           eps_min=0.01, decay_fraction=0.3)
PUNISH_HP = ModelHyperparams(learning_rate=0.001, buffer_capacity=524288,
                             eps_min=0.2, decay_fraction=0.5)


@dataclass(frozen=True)
class SimulationConfig:
    """Everything one simulation repeat needs; deterministic under
    (config, seed, spawn_key)."""

    mode: Mode
    scheme: RewardScheme = RewardScheme.SCHEME2
    pop_size: int = 5
    episodes: int = 2000
    rounds: int = 10
    hidden_dim: int = 128
    seed: int = 0
    spawn_key: tuple[int, ...] = ()
    encoding: StateEncodingConfig | None = None
    select_hp: ModelHyperparams = SELECT_HP
    play_hp: ModelHyperparams = PLAY_HP
    punish_hp: ModelHyperparams = PUNISH_HP

    def __post_init__(self):
        if self.encoding is None:
            object.__setattr__(self, "encoding",
                               StateEncodingConfig.defaults_for_mode(self.mode))
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.mode, Mode):
            raise ConfigError(f"mode must be a Mode, got {self.mode!r}")
        if not isinstance(self.scheme, RewardScheme):
            raise ConfigError(f"scheme must be a RewardScheme, got {self.scheme!r}")
        if self.pop_size < 2:
            raise ConfigError(f"pop_size must be >= 2, got {self.pop_size}")
        if self.mode.third_party_punishment and self.pop_size < 4:
            raise ConfigError(
                f"third-party punishment needs pop_size >= 4 "
                f"(two uninvolved judges per pairing), got {self.pop_size}")
        if self.episodes < 1:
            raise ConfigError(f"episodes must be >= 1, got {self.episodes}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        for name in ("select_hp", "play_hp", "punish_hp"):
            hp = getattr(self, name)
            if not isinstance(hp, ModelHyperparams):
                raise ConfigError(f"{name} must be ModelHyperparams, got {hp!r}")
            try:
                hp.schedule(self.episodes)
                hp.trainer()
            except ValueError as err:
                raise ConfigError(f"{name}: {err}") from err

    def with_repeat(self, config_index: int, repeat: int) -> "SimulationConfig":
        """The per-repeat variant: same master seed, distinct spawn key."""
        return replace(self, spawn_key=(config_index, repeat))


def parse_scheme(value) -> RewardScheme:
    if isinstance(value, RewardScheme):
        return value
    try:
        return RewardScheme(int(value))
    except (TypeError, ValueError):
        raise ConfigError(f"scheme must be 1 or 2, got {value!r}") from None


def parse_mode(value) -> Mode:
    if isinstance(value, Mode):
        return value
    try:
        return Mode.parse(str(value))
    except ValueError as err:
        raise ConfigError(str(err)) from None


_HP_INT_FIELDS = frozenset(("buffer_capacity", "batch_size", "target_update_interval"))


def _hyperparams_from(mapping: dict, base: ModelHyperparams, where: str) -> ModelHyperparams:
    allowed = {f.name for f in fields(ModelHyperparams)}
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    clean = {}
    for key, value in mapping.items():
        # YAML reads literals like 1e9 as strings; coerce all numerics
        try:
            clean[key] = int(value) if key in _HP_INT_FIELDS else float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.{key} must be numeric, got {value!r}") from None
    return replace(base, **clean)


def config_from_mapping(mapping: dict) -> SimulationConfig:
    """Build a SimulationConfig from a plain key-value tree (config file
    contents merged with CLI overrides)."""
    data = dict(mapping)
    kwargs = {}
    if "mode" not in data:
        raise ConfigError("config needs a mode")
    kwargs["mode"] = parse_mode(data.pop("mode"))
    if "scheme" in data:
        kwargs["scheme"] = parse_scheme(data.pop("scheme"))
    for key in ("pop_size", "episodes", "rounds", "hidden_dim", "seed"):
        if key in data:
            try:
                kwargs[key] = int(data.pop(key))
            except (TypeError, ValueError):
                raise ConfigError(f"{key} must be an integer") from None
    if "spawn_key" in data:
        kwargs["spawn_key"] = tuple(int(v) for v in data.pop("spawn_key"))

    enc_kwargs = {}
    if "rep_sources" in data:
        try:
            enc_kwargs["rep_sources"] = RepSources.parse(str(data.pop("rep_sources")))
        except ValueError as err:
            raise ConfigError(str(err)) from None
    for key in ("rep_in_play_state", "rep_in_punish_state", "normalize_rep_by_episode"):
        if key in data:
            value = data.pop(key)
            if not isinstance(value, bool):
                raise ConfigError(f"{key} must be a boolean, got {value!r}")
            enc_kwargs[key] = value
    if enc_kwargs:
        base = StateEncodingConfig.defaults_for_mode(kwargs["mode"])
        kwargs["encoding"] = replace(base, **enc_kwargs)

    for name, base in (("select_hp", SELECT_HP), ("play_hp", PLAY_HP), ("punish_hp", PUNISH_HP)):
        short = name.replace("_hp", "")
        if short in data:
            section = data.pop(short)
            if not isinstance(section, dict):
                raise ConfigError(f"{short} section must be a mapping")
            kwargs[name] = _hyperparams_from(section, base, short)

    if data:
        raise ConfigError(f"unknown config keys: {sorted(data)}")
    try:
        return SimulationConfig(**kwargs)
    except ValueError as err:
        raise ConfigError(str(err)) from None


def config_to_mapping(cfg: SimulationConfig) -> dict:
    """Plain key-value echo of a config, inverted by config_from_mapping.
    Used for manifests, so every field that affects results is present."""
    enc = cfg.encoding
    out = {
        "mode": cfg.mode.value,
        "scheme": cfg.scheme.value,
        "pop_size": cfg.pop_size,
        "episodes": cfg.episodes,
        "rounds": cfg.rounds,
        "hidden_dim": cfg.hidden_dim,
        "seed": cfg.seed,
        "spawn_key": list(cfg.spawn_key),
        "rep_sources": enc.rep_sources.value,
        "rep_in_play_state": enc.rep_in_play_state,
        "rep_in_punish_state": enc.rep_in_punish_state,
        "normalize_rep_by_episode": enc.normalize_rep_by_episode,
    }
    for name in ("select_hp", "play_hp", "punish_hp"):
        hp = getattr(cfg, name)
        out[name.replace("_hp", "")] = {
            f.name: getattr(hp, f.name) for f in fields(ModelHyperparams)
        }
    return out


def load_config_file(path) -> dict:
    """Read a YAML config file into a plain mapping."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a key-value mapping")
    return data
