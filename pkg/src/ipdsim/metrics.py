"""Per-episode metrics, rolling means, and cross-repeat confidence
intervals.

The simulation loop emits raw tallies (EpisodeCounts); this module turns
them into the eight reported metrics, smooths series with a window-100
rolling mean (expanding head, nulls excluded), and aggregates repeats
into mean and 95% t-interval bands.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

METRIC_NAMES = (
    "cooperation_pct",
    "cooperator_selection_pct",
    "punishment_pct",
    "selected_punisher_pct",
    "just_ratio_pct",
    "just_punisher_selection_pct",
    "societal_reward",
    "societal_reputation",
)

ROLLING_WINDOW = 100


@dataclass
class EpisodeCounts:
    """Raw per-episode tallies from one simulation repeat.

    `selections` is 0 on episodes without usable selection statistics
    (episode 0 has no previous-episode behavior to judge partners by);
    those episodes serialize the three selection metrics as null.
    """

    play_actions: np.ndarray
    coop_actions: np.ndarray
    punish_opportunities: np.ndarray
    punish_count: np.ndarray
    just_count: np.ndarray
    selections: np.ndarray
    coop_selected: np.ndarray
    punisher_selected: np.ndarray
    just_punisher_selected: np.ndarray
    reward_total: np.ndarray
    reputation_total: np.ndarray

    @classmethod
    def empty(cls, episodes: int) -> "EpisodeCounts":
        kwargs = {}
        for f in fields(cls):
            dtype = np.float64 if f.name in ("reward_total", "reputation_total") else np.int64
            kwargs[f.name] = np.zeros(episodes, dtype=dtype)
        return cls(**kwargs)

    def __len__(self) -> int:
        return self.play_actions.shape[0]


def metric_table(counts: EpisodeCounts) -> np.ndarray:
    """(episodes, 8) float array in METRIC_NAMES column order; NaN marks
    null entries (no punishment opportunities, zero punishments, or no
    prior episode for selection metrics)."""
    c = counts
    coop = 100.0 * c.coop_actions / c.play_actions
    pun = np.where(c.punish_opportunities > 0,
                   100.0 * c.punish_count / np.maximum(c.punish_opportunities, 1),
                   np.nan)
    just = np.where(c.punish_count > 0,
                    100.0 * c.just_count / np.maximum(c.punish_count, 1),
                    np.nan)
    has_sel = c.selections > 0
    den = np.maximum(c.selections, 1)
    coop_sel = np.where(has_sel, 100.0 * c.coop_selected / den, np.nan)
    pun_sel = np.where(has_sel, 100.0 * c.punisher_selected / den, np.nan)
    just_sel = np.where(has_sel, 100.0 * c.just_punisher_selected / den, np.nan)
    return np.stack([coop, coop_sel, pun, pun_sel, just, just_sel,
                     c.reward_total.astype(np.float64),
                     c.reputation_total.astype(np.float64)], axis=1)


def rolling_mean(series, window: int = ROLLING_WINDOW) -> np.ndarray:
    """Trailing mean over up to `window` entries ending at each index.

    The head expands (index e averages entries 0..e) so the series keeps
    its length. NaN entries are excluded from both numerator and
    denominator; an all-NaN window stays NaN. Each output is an exact
    fresh summation, no drifting running totals.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"series must be 1-dimensional, got shape {x.shape}")
    pad = np.full(window - 1, np.nan)
    xp = np.concatenate([pad, x])
    valid = np.isfinite(xp)
    vals = np.where(valid, xp, 0.0)
    num = sliding_window_view(vals, window).sum(axis=1)
    den = sliding_window_view(valid, window).sum(axis=1).astype(np.float64)
    out = np.divide(num, den, out=np.full(x.shape, np.nan), where=den > 0)
    return out


@dataclass
class AggregateSeries:
    """Cross-repeat mean and confidence band, one entry per episode."""

    mean: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray


def aggregate_ci(repeat_series, confidence: float = 0.95) -> AggregateSeries:
    """Per-episode mean with a t-distribution confidence interval across
    repeats. Entries that are NaN in some repeats are aggregated over the
    remaining ones; fewer than two finite values leaves a degenerate band
    (mean with zero width, or NaN when no repeat has a value)."""
    rows = np.asarray(list(repeat_series), dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError(f"expected a list of equal-length series, got shape {rows.shape}")
    if rows.shape[0] < 2:
        raise ValueError(f"need at least 2 repeats to aggregate, got {rows.shape[0]}")
    valid = np.isfinite(rows)
    n = valid.sum(axis=0)
    vals = np.where(valid, rows, 0.0)
    total = vals.sum(axis=0)
    mean = np.divide(total, n, out=np.full(rows.shape[1], np.nan), where=n > 0)
    dev = np.where(valid, rows - mean, 0.0)
    ssq = (dev * dev).sum(axis=0)
    var = np.divide(ssq, n - 1, out=np.zeros(rows.shape[1]), where=n > 1)
    half = np.zeros(rows.shape[1])
    for count in np.unique(n):
        if count < 2:
            continue
        at = n == count
        tval = stats.t.ppf(0.5 + confidence / 2.0, count - 1)
        half[at] = tval * np.sqrt(var[at] / count)
    return AggregateSeries(mean=mean, ci_low=mean - half, ci_high=mean + half)
