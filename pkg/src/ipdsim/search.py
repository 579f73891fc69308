"""Random hyperparameter search.

Samples trial combinations from fixed grids (powers of two for memory
sizes, linspace grids for exploration, small sets for discounting and
learning rates), applies each combination to all three ability models,
scores by mean societal reward over a few short repeats, and ranks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import ModelHyperparams, SimulationConfig
from .dqn import NumericalFailure
from .orchestrator import run_simulation


@dataclass(frozen=True)
class SearchSpace:
    """Sampling grids; every sampled value is a member of its grid."""

    buffer_sizes: tuple = tuple(2 ** k for k in range(11, 21))
    batch_sizes: tuple = tuple(2 ** k for k in range(10, 19))
    target_intervals: tuple = tuple(range(500, 5001, 500))
    eps_grid: tuple = tuple(np.linspace(1e-4, 1.0, 10))
    decay_grid: tuple = tuple(np.linspace(1e-4, 0.9, 10))
    gammas: tuple = (0.8, 0.9, 0.99)
    learning_rates: tuple = (0.001, 0.01, 0.1)
    trials: int = 100


def sample_combo(space: SearchSpace, rng: np.random.Generator) -> dict:
    """One combination, eps endpoints swapped if drawn inverted."""
    def pick(grid):
        values = list(grid)
        return values[int(rng.integers(len(values)))]

    eps_a = pick(space.eps_grid)
    eps_b = pick(space.eps_grid)
    eps_min, eps_max = sorted((eps_a, eps_b))
    return {
        "learning_rate": pick(space.learning_rates),
        "gamma": pick(space.gammas),
        "batch_size": pick(space.batch_sizes),
        "buffer_capacity": pick(space.buffer_sizes),
        "target_update_interval": pick(space.target_intervals),
        "eps_min": eps_min,
        "eps_max": eps_max,
        "decay_fraction": pick(space.decay_grid),
    }


COMBO_FIELDS = ("learning_rate", "gamma", "batch_size", "buffer_capacity",
                "target_update_interval", "eps_min", "eps_max", "decay_fraction")


@dataclass
class TrialResult:
    trial: int
    combo: dict
    score: float  # mean societal reward per episode across repeats; NaN on failure


def run_trial(base: SimulationConfig, combo: dict, trial: int, repeats: int) -> TrialResult:
    hp = ModelHyperparams(**combo)
    cfg = replace(base, select_hp=hp, play_hp=hp, punish_hp=hp)
    scores = []
    for r in range(repeats):
        try:
            result = run_simulation(cfg.with_repeat(trial, r))
        except NumericalFailure:
            return TrialResult(trial=trial, combo=combo, score=float("nan"))
        scores.append(float(result.counts.reward_total.mean()))
    return TrialResult(trial=trial, combo=combo, score=float(np.mean(scores)))


def rank_trials(results: list[TrialResult]) -> list[TrialResult]:
    """Descending by score, ties (and NaN scores, ranked last) by trial
    index."""
    def key(res: TrialResult):
        failed = not np.isfinite(res.score)
        return (failed, -(res.score if not failed else 0.0), res.trial)

    return sorted(results, key=key)


def sample_all(space: SearchSpace, trials: int, seed: int) -> list[dict]:
    """The full trial list up front, from its own deterministic stream."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return [sample_combo(space, rng) for _ in range(trials)]
