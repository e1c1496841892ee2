import math
import warnings

import numpy as np
import pytest

from netcar.inference import PoissonLikelihood
from netcar.inference.criteria import (
    decile_boundaries,
    dic,
    quantile_classes,
    rate_quantile_classes,
    waic,
)


class FakeModel:
    def __init__(self, Y, E):
        self.lik = PoissonLikelihood(np.atleast_2d(Y), np.atleast_1d(E))

    def pointwise_loglik(self, eta):
        return self.lik.pointwise(eta)


class FakeChains:
    def __init__(self, eta):
        self.draws = {"eta": np.asarray(eta, dtype=float)}


def test_two_draw_hand_case():
    model = FakeModel([[2]], [1.0])
    ch = FakeChains([[[0.0]], [[math.log(2)]]])
    parts = dic(ch, model, min_draws=1, return_parts=True)
    assert abs(parts["Dbar"] - 3.0) < 1e-10
    assert abs(parts["D_hat"] - 2 * math.sqrt(2)) < 1e-10
    assert abs(parts["p_D"] - (3 - 2 * math.sqrt(2))) < 1e-10
    assert abs(parts["DIC"] - (6 - 2 * math.sqrt(2))) < 1e-10
    w = waic(ch, model, min_draws=1, return_parts=True)
    lppd = math.log((math.exp(-1) / 2 + 2 * math.exp(-2)) / 2)
    p = (1 - 2 * math.log(2)) ** 2 / 2
    assert abs(w["lppd"] - lppd) < 1e-12
    assert abs(w["p_WAIC"] - p) < 1e-12
    assert abs(w["WAIC"] + 2 * (lppd - p)) < 1e-12


def test_degenerate_chain():
    rng = np.random.default_rng(0)
    Y = rng.poisson(2, (5, 2))
    model = FakeModel(Y, np.ones(5))
    eta = rng.normal(0, 0.3, (5, 2))
    ch = FakeChains(np.repeat(eta[None], 150, axis=0))
    d = dic(ch, model, return_parts=True)
    assert abs(d["p_D"]) < 1e-9 and abs(d["DIC"] - d["D_hat"]) < 1e-9
    w = waic(ch, model, return_parts=True)
    assert abs(w["p_WAIC"]) < 1e-12
    assert abs(w["WAIC"] + 2 * model.pointwise_loglik(eta).sum()) < 1e-9


def test_minimum_draws():
    model = FakeModel([[1]], [1.0])
    with pytest.raises(ValueError):
        dic(FakeChains(np.zeros((50, 1, 1))), model)


def test_waic_variance_warning():
    model = FakeModel([[30]], [1.0])
    eta = np.random.default_rng(1).normal(3, 1.5, (200, 1, 1))
    with pytest.warns(RuntimeWarning):
        waic(FakeChains(eta), model)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        waic(FakeChains(np.full((200, 1, 1), 3.0)), model)


class TestClasses:
    def test_constant(self):
        assert np.all(quantile_classes(np.full(37, 2.5)) == 1)

    def test_ten_distinct(self):
        x = np.random.default_rng(2).permutation(10) * 1.7
        assert sorted(quantile_classes(x).tolist()) == list(range(1, 11))
        assert quantile_classes(x)[np.argmax(x)] == 10

    def test_sort_oracle(self):
        rng = np.random.default_rng(3)
        for n in (11, 57, 200, 1001):
            x = rng.gamma(2.0, size=n)
            s = np.sort(x)
            for k in range(1, 10):
                h = (n - 1) * k / 10
                lo = int(math.floor(h))
                q = s[lo] + (h - lo) * (s[min(lo + 1, n - 1)] - s[lo])
                assert abs(decile_boundaries(x)[k - 1] - q) < 1e-12
            cls = quantile_classes(x)
            b = decile_boundaries(x)
            for v, c in zip(x, cls):
                assert c == 1 + sum(v > bb for bb in b)

    def test_rate_classes_shape(self):
        eta = np.random.default_rng(4).normal(size=(30, 20, 2))
        cls = rate_quantile_classes(FakeChains(eta))
        assert cls.shape == (20, 2) and cls.min() >= 1 and cls.max() == 10
