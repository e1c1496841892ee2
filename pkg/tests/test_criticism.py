import math

import numpy as np
import pytest

from netcar.criticism import (
    ConfusionMatrix,
    QuantileGrid,
    accuracy_measures,
    balanced_accuracy,
    balanced_accuracy_distribution,
    confusion_binary,
    confusion_multiclass,
    grouped_histogram,
)


class TestConfusion:
    def test_perfect(self):
        assert confusion_binary([0, 0, 1, 2], [0, 0, 1, 2]) == ConfusionMatrix(2, 0, 0, 2)

    def test_total_disagreement(self):
        assert confusion_binary([0, 0, 1, 1], [1, 1, 0, 0]) == ConfusionMatrix(0, 2, 2, 0)

    def test_brute_force(self):
        rng = np.random.default_rng(0)
        o, p = rng.poisson(0.8, 300), rng.poisson(0.8, 300)
        cm = confusion_binary(o, p)
        cells = [[0, 0], [0, 0]]
        for a, b in zip(o, p):
            cells[int(a >= 1)][int(b >= 1)] += 1
        assert cm.as_array().tolist() == cells and cm.n == 300

    def test_multiclass(self):
        T = confusion_multiclass([0, 1, 2, 5], [0, 2, 2, 1], thresholds=(1, 2))
        assert T.tolist() == [[1, 0, 0], [0, 0, 1], [0, 1, 1]]


class TestMeasures:
    def test_perfect(self):
        r = accuracy_measures(ConfusionMatrix(2, 0, 0, 2))
        assert (r.sensitivity, r.specificity, r.accuracy, r.balanced_accuracy) == (1, 1, 1, 1)

    def test_empty_class(self):
        r = accuracy_measures(ConfusionMatrix(50, 50, 0, 0))
        assert r.sensitivity == 0.5 and math.isnan(r.specificity)
        assert r.undefined_class == "positive" and r.balanced_accuracy == 0.5

    def test_hand_case(self):
        r = accuracy_measures(ConfusionMatrix(8, 2, 1, 9))
        assert (r.sensitivity, r.specificity, r.accuracy, r.balanced_accuracy) == (0.8, 0.9, 0.85, 0.85)
        assert r.undefined_class is None

    def test_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            cm = ConfusionMatrix(*rng.integers(1, 30, 4).tolist())
            r = accuracy_measures(cm)
            assert abs(r.balanced_accuracy - (r.sensitivity + r.specificity) / 2) <= 1e-15
            o = [0] * (cm.A + cm.B) + [1] * (cm.C + cm.D)
            p = [0] * cm.A + [1] * cm.B + [0] * cm.C + [1] * cm.D
            assert abs(balanced_accuracy(o, p) - r.balanced_accuracy) < 1e-15


class TestDistribution:
    def test_degenerate_zero(self):
        grid = QuantileGrid(("mean",), {"mean": np.zeros((40, 1))})
        out = balanced_accuracy_distribution(grid, np.zeros((40, 1), int), N=200)
        assert np.all(out[(0, "mean")] == 1.0)

    def test_large_counts_concentrate(self):
        rng = np.random.default_rng(2)
        obs = np.concatenate([np.zeros(150, int), rng.integers(50, 80, 150)])[:, None]
        grid = QuantileGrid(("mean",), {"mean": obs.astype(float)})
        ba = balanced_accuracy_distribution(grid, obs, N=5000, seed=1)[(0, "mean")]
        assert np.median(ba) >= 0.95

    def test_shuffle_null(self):
        rng = np.random.default_rng(3)
        mu = rng.gamma(0.5, 2.0, 1000)
        obs = rng.poisson(mu)
        assert (obs == 0).sum() >= 100 and (obs > 0).sum() >= 100
        grid = QuantileGrid(("mean",), {"mean": rng.permutation(mu)[:, None]})
        ba = balanced_accuracy_distribution(grid, obs[:, None], N=5000, seed=4)[(0, "mean")]
        assert 0.45 <= ba.mean() <= 0.55

    def test_deterministic_and_substreams(self):
        rng = np.random.default_rng(5)
        draws = rng.gamma(1.0, 1.0, (300, 60, 2))
        grid = QuantileGrid.from_draws(draws)
        obs = rng.poisson(1.0, (60, 2))
        a = balanced_accuracy_distribution(grid, obs, N=100, seed=9)
        b = balanced_accuracy_distribution(grid, obs, N=100, seed=9)
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert len(a) == 2 * len(grid.levels)
        assert not np.array_equal(a[(0, 0.5)], a[(1, 0.5)])

    def test_grid_monotone(self):
        grid = QuantileGrid.from_draws(np.random.default_rng(6).gamma(1.0, 1.0, (400, 30, 2)))
        qs = [0.025, 0.25, 0.5, 0.75, 0.975]
        for lo, hi in zip(qs, qs[1:]):
            assert np.all(grid.values[lo] <= grid.values[hi])

    def test_invalid_N(self):
        with pytest.raises(ValueError):
            balanced_accuracy_distribution(QuantileGrid(("mean",), {"mean": np.zeros((3, 1))}), np.zeros((3, 1)), N=0)


class TestHistogram:
    def test_all_zero_observed(self):
        h = grouped_histogram(np.linspace(0, 3, 25), np.zeros(25, int))
        assert h.group_labels == ("0",) and h.counts.sum() == 25 and h.counts.shape == (1, 30)

    def test_pooling(self):
        h = grouped_histogram([0.1, 1.2, 2.2, 2.9, 4.4], [0, 1, 2, 3, 4])
        assert h.group_labels == ("0", "1", "2", "3+") and h.group_sizes.tolist() == [1, 1, 1, 2]

    def test_means_ordered(self):
        obs = np.random.default_rng(7).poisson(1.5, 500)
        h = grouped_histogram(obs.astype(float), obs)
        assert np.all(np.diff(h.group_means) >= 0)
        assert len(h.edges) == 31 and h.edges[0] == obs.min() and h.edges[-1] == obs.max()
