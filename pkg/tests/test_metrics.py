"""Metric table, rolling mean, and confidence-band tests.

rolling_mean is checked against a naive per-index re-summation oracle;
aggregate_ci against hand-computed t-interval values and a Monte Carlo
coverage experiment.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ipdsim.metrics import (
    METRIC_NAMES,
    ROLLING_WINDOW,
    EpisodeCounts,
    aggregate_ci,
    metric_table,
    rolling_mean,
)


def naive_rolling(series, window):
    """Trailing-window NaN-excluded mean, one index at a time."""
    out = np.empty(len(series))
    for i in range(len(series)):
        chunk = np.asarray(series[max(0, i - window + 1): i + 1], dtype=np.float64)
        finite = chunk[np.isfinite(chunk)]
        out[i] = finite.mean() if finite.size else np.nan
    return out


class TestRollingMean:
    def test_two_point_example(self):
        # [DERIVED] second value averages the full history so far.
        assert rolling_mean(np.array([0.0, 100.0]), window=2).tolist() == [0.0, 50.0]

    def test_expanding_head(self):
        series = np.arange(10, dtype=np.float64)
        got = rolling_mean(series, window=4)
        assert np.allclose(got[:4], [0.0, 0.5, 1.0, 1.5])
        assert np.allclose(got[4:], np.arange(10)[4:] - 1.5)

    def test_constant_series_unchanged(self):
        series = np.full(250, 7.25)
        assert np.array_equal(rolling_mean(series), series)

    def test_nan_values_excluded(self):
        got = rolling_mean(np.array([1.0, np.nan, 3.0]), window=3)
        assert got.tolist() == [1.0, 1.0, 2.0]

    def test_all_nan_window_stays_nan(self):
        got = rolling_mean(np.array([np.nan, np.nan, 4.0]), window=2)
        assert np.isnan(got[0]) and np.isnan(got[1]) and got[2] == 4.0

    @settings(max_examples=60, deadline=None)
    @given(
        hnp.arrays(np.float64, st.integers(1, 300),
                   elements=st.floats(-50, 50, allow_nan=False)),
        st.integers(1, 120),
        st.data(),
    )
    def test_matches_naive_oracle(self, series, window, data):
        # sprinkle NaN holes over the series
        if series.size:
            holes = data.draw(st.lists(st.integers(0, series.size - 1), max_size=20))
            series[holes] = np.nan
        got = rolling_mean(series, window=window)
        want = naive_rolling(series, window)
        assert np.allclose(got, want, equal_nan=True, atol=1e-9)

    def test_default_window(self):
        series = np.ones(300)
        series[:150] = 3.0
        got = rolling_mean(series)
        # index 249 averages indices 150..249, all 1.0
        assert got[249] == 1.0
        assert got[150] == (3.0 * 99 + 1.0) / 100
        assert ROLLING_WINDOW == 100


class TestAggregateCI:
    def test_hand_value_two_repeats(self):
        # [DERIVED] repeats {0, 10}: mean 5, sd = sqrt(50), and the 95%
        # two-sided t quantile at 1 dof is 12.706204736174698, so the
        # half-width is t * sd / sqrt(2) = t * 5 = 63.53102368087349.
        series = np.array([[0.0], [10.0]])
        agg = aggregate_ci(series)
        assert agg.mean[0] == 5.0
        assert np.isclose(agg.ci_high[0] - agg.mean[0], 63.53102368087349)
        assert np.isclose(agg.mean[0] - agg.ci_low[0], 63.53102368087349)

    def test_zero_variance_collapses(self):
        series = np.full((6, 4), 2.5)
        agg = aggregate_ci(series)
        assert np.array_equal(agg.mean, np.full(4, 2.5))
        assert np.array_equal(agg.ci_low, agg.mean)
        assert np.array_equal(agg.ci_high, agg.mean)

    def test_requires_two_repeats_and_2d(self):
        with pytest.raises(ValueError):
            aggregate_ci(np.ones((1, 5)))
        with pytest.raises(ValueError):
            aggregate_ci(np.ones(5))

    def test_nan_episodes_use_finite_subset(self):
        # one repeat missing a value: that episode falls back to the
        # remaining repeats' interval
        series = np.array([[1.0, 1.0], [3.0, 3.0], [2.0, np.nan]])
        agg = aggregate_ci(series)
        assert agg.mean[1] == 2.0
        three_n = aggregate_ci(np.array([[1.0], [3.0], [2.0]]))
        two_n = aggregate_ci(np.array([[1.0], [3.0]]))
        assert np.isclose(agg.ci_high[0], three_n.ci_high[0])
        assert np.isclose(agg.ci_high[1], two_n.ci_high[0])

    def test_single_finite_value_degenerate_band(self):
        series = np.array([[np.nan, 1.0], [4.0, 2.0]])
        agg = aggregate_ci(series)
        assert agg.mean[0] == 4.0
        assert agg.ci_low[0] == agg.ci_high[0] == 4.0

    def test_monte_carlo_coverage(self):
        # [DERIVED] nominal 95% coverage of the true mean; 2000 trials of
        # n=20 standard normals leave coverage within 5 sigma of 0.95.
        rng = np.random.default_rng(12345)
        trials = 2000
        series = rng.standard_normal((20, trials))
        agg = aggregate_ci(series)
        covered = (agg.ci_low <= 0.0) & (0.0 <= agg.ci_high)
        rate = covered.mean()
        sigma = np.sqrt(0.95 * 0.05 / trials)
        assert abs(rate - 0.95) < 5 * sigma

    def test_permutation_invariant(self):
        rng = np.random.default_rng(3)
        series = rng.normal(size=(8, 30))
        a = aggregate_ci(series)
        b = aggregate_ci(series[rng.permutation(8)])
        assert np.allclose(a.mean, b.mean)
        assert np.allclose(a.ci_low, b.ci_low)
        assert np.allclose(a.ci_high, b.ci_high)

    @settings(max_examples=40, deadline=None)
    @given(hnp.arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(1, 25)),
                      elements=st.floats(-100, 100, allow_nan=False)))
    def test_band_brackets_mean(self, series):
        agg = aggregate_ci(series)
        assert np.all(agg.ci_low <= agg.mean + 1e-12)
        assert np.all(agg.mean <= agg.ci_high + 1e-12)


class TestMetricTable:
    def make_counts(self, episodes=3):
        return EpisodeCounts.empty(episodes)

    def test_column_order_matches_names(self):
        assert METRIC_NAMES == (
            "cooperation_pct",
            "cooperator_selection_pct",
            "punishment_pct",
            "selected_punisher_pct",
            "just_ratio_pct",
            "just_punisher_selection_pct",
            "societal_reward",
            "societal_reputation",
        )

    def test_percentages_and_totals(self):
        c = self.make_counts(1)
        c.play_actions[0] = 100
        c.coop_actions[0] = 37
        c.punish_opportunities[0] = 40
        c.punish_count[0] = 10
        c.just_count[0] = 9
        c.selections[0] = 5
        c.coop_selected[0] = 4
        c.punisher_selected[0] = 3
        c.just_punisher_selected[0] = 2
        c.reward_total[0] = 123.5
        c.reputation_total[0] = -17.0
        row = metric_table(c)[0]
        assert row.tolist() == [37.0, 80.0, 25.0, 60.0, 90.0, 40.0, 123.5, -17.0]

    def test_null_conventions(self):
        c = self.make_counts(1)
        c.play_actions[0] = 20
        c.coop_actions[0] = 20
        # zero selections, zero punish opportunities, zero punishments
        row = metric_table(c)[0]
        assert row[0] == 100.0
        assert np.isnan(row[1])  # no selections yet
        assert np.isnan(row[2])  # no punishment opportunities
        assert np.isnan(row[3])
        assert np.isnan(row[4])  # no punishments to classify
        assert np.isnan(row[5])
        assert row[6] == 0.0 and row[7] == 0.0

    def test_just_ratio_null_only_without_punishments(self):
        c = self.make_counts(2)
        c.play_actions[:] = 10
        c.punish_opportunities[:] = 10
        c.punish_count[:] = [0, 4]
        c.just_count[:] = [0, 1]
        table = metric_table(c)
        col = METRIC_NAMES.index("just_ratio_pct")
        assert np.isnan(table[0, col])
        assert table[1, col] == 25.0
        pcol = METRIC_NAMES.index("punishment_pct")
        assert table[0, pcol] == 0.0
        assert table[1, pcol] == 40.0

    def test_shape(self):
        c = self.make_counts(7)
        c.play_actions[:] = 1
        assert metric_table(c).shape == (7, 8)
        assert len(c) == 7
