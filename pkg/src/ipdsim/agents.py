"""Per-agent composition of the ability models and their state encodings.

Each agent owns up to three DQN models: partner selection, dilemma play,
and punishment (one shared punishment model judges both direct and
third-party opportunities). State encodings are frozen here; every
consumer (simulation loop, tests) goes through these functions or their
vectorized equivalents.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dqn import q_rows, select_actions
from .game import Mode


class ConfigurationError(ValueError):
    """A decision or construction that the active mechanism config forbids."""


class Ability(Enum):
    SELECT = "select"
    PLAY = "play"
    PUNISH = "punish"


class RepSources(Enum):
    """Which decision kinds feed reputation updates."""

    PLAY_ONLY = "play-only"
    PUNISH_ONLY = "punish-only"
    BOTH = "both"

    @classmethod
    def parse(cls, text: str) -> "RepSources":
        key = text.strip().lower().replace("_", "-")
        for v in cls:
            if v.value == key:
                return v
        raise ValueError(f"unknown rep-sources {text!r}; expected one of "
                         f"{', '.join(v.value for v in cls)}")


@dataclass(frozen=True)
class StateEncodingConfig:
    """What goes into each model's input state.

    Stored reputations are unbounded cumulative integers; values that large
    are untrainable as network inputs (the play model's learning rate
    diverges within a handful of SGD steps), so inputs are conditioned.
    The default maps the population's reputations to [0, 1] by min-max,
    which preserves the ordering partner selection needs and keeps the
    input scale stationary over the whole run. normalize_rep_by_episode
    switches to dividing raw values by max(1, episode) instead; that keeps
    magnitudes but leaves inputs at the per-episode delta scale, which can
    still overwhelm the play model's step size. rep_sources gates which
    decision kinds feed reputation updates at all.
    """

    rep_in_play_state: bool
    rep_in_punish_state: bool = False
    rep_sources: RepSources = RepSources.BOTH
    normalize_rep_by_episode: bool = False

    @property
    def play_dim(self) -> int:
        return 4 if self.rep_in_play_state else 2

    @property
    def punish_dim(self) -> int:
        return 4 if self.rep_in_punish_state else 2

    @staticmethod
    def defaults_for_mode(mode: Mode) -> "StateEncodingConfig":
        # reputation is visible to play decisions except under pure direct
        # punishment, where partners already witness each other's actions
        return StateEncodingConfig(rep_in_play_state=mode not in (Mode.DP, Mode.DP_S))


def encode_select_state(reputations: np.ndarray) -> np.ndarray:
    """All agents' reputations, own included at own index, cast to float."""
    return np.asarray(reputations, dtype=np.float64).copy()


def condition_reputations(cfg: StateEncodingConfig, reputations: np.ndarray,
                          episode: int) -> np.ndarray:
    """Reputation values as the networks see them: min-max scaled to [0, 1]
    (all-equal vectors map to zeros), or divided by max(1, episode) under
    the normalize_rep_by_episode switch."""
    reps = np.asarray(reputations, dtype=np.float64)
    if cfg.normalize_rep_by_episode:
        return reps / max(1, episode)
    lo = reps.min()
    span = reps.max() - lo
    if span == 0.0:
        return np.zeros_like(reps)
    return (reps - lo) / span


def encode_play_state(
    cfg: StateEncodingConfig,
    self_prev: int,
    partner_prev: int,
    self_rep: float = 0.0,
    partner_rep: float = 0.0,
) -> np.ndarray:
    """Play-model input: [self_rep, partner_rep, self_prev, partner_prev]
    when reputation is in the state, else [self_prev, partner_prev]."""
    if cfg.rep_in_play_state:
        return np.array([self_rep, partner_rep, float(self_prev), float(partner_prev)])
    return np.array([float(self_prev), float(partner_prev)])


def encode_punish_state(
    cfg: StateEncodingConfig,
    target_action: int,
    target_partner_action: int,
    target_rep: float = 0.0,
    target_partner_rep: float = 0.0,
) -> np.ndarray:
    """Punish-model input: the judged pair's actions this round, target
    first; reputations prepended when configured in."""
    if cfg.rep_in_punish_state:
        return np.array([target_rep, target_partner_rep,
                         float(target_action), float(target_partner_action)])
    return np.array([float(target_action), float(target_partner_action)])


@dataclass
class AgentBrain:
    """One agent's view into the population's stacked ability models.

    `models` carries optional `select` and `punish` learners plus an
    always-present `play` learner; `index` is the agent's slot in every
    stacked parameter array.
    """

    models: object
    index: int

    def learner(self, ability: Ability):
        handle = getattr(self.models, ability.value, None)
        if handle is None:
            raise ConfigurationError(f"{ability.value} model is not active in this configuration")
        return handle


def decide(brain: AgentBrain, ability: Ability, state: np.ndarray,
           episode: int, rng: np.random.Generator) -> int:
    """Epsilon-greedy action from one agent's model for `ability`. Partner
    selection masks the agent's own index."""
    learner = brain.learner(ability)
    state = np.asarray(state, dtype=np.float64)
    agents = np.array([brain.index])
    q = q_rows(learner.net, agents, state[None, :])
    forbid = agents if ability is Ability.SELECT else None
    return int(select_actions(q, learner.epsilon(episode), rng, forbid=forbid)[0])
