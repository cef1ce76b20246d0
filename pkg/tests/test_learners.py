import numpy as np
import pytest

from netquant.errors import ArgumentError
from netquant.learners import (ConstantModel, GradientBoostingLearner,
                               LogisticRegressionLearner, PRED_CLIP, get_learner)


def expit(z):
    return 1.0 / (1.0 + np.exp(-z))


class TestLogistic:
    def test_recovers_simulation_margin_coefficients(self):
        # labels from expit(-0.5 + 0.3 x1 + 0.3 x2 + 0.3 x3), 5000 individuals
        rng = np.random.default_rng(7)
        n = 5000
        x = np.column_stack([rng.normal(size=n), rng.normal(size=n),
                             rng.integers(0, 2, size=n).astype(float)])
        p = expit(-0.5 + 0.3 * x[:, 0] + 0.3 * x[:, 1] + 0.3 * x[:, 2])
        y = (rng.random(n) < p).astype(float)
        model = LogisticRegressionLearner().fit(x, y)
        raw = model.raw_coefficients()
        truth = np.array([-0.5, 0.3, 0.3, 0.3])
        assert np.abs(raw - truth).max() < 0.15

    def test_intercept_only_matches_rate(self):
        rng = np.random.default_rng(3)
        x = np.ones((400, 2))
        y = (rng.random(400) < 0.5).astype(float)
        model = LogisticRegressionLearner().fit(x, y)
        pred = model.predict(x)
        assert np.abs(pred - y.mean()).max() < 1e-6

    def test_degenerate_labels_give_constant_model(self):
        x = np.random.default_rng(0).normal(size=(50, 2))
        model = LogisticRegressionLearner().fit(x, np.ones(50))
        assert isinstance(model, ConstantModel)
        assert model.predict(x).max() <= 1.0 - PRED_CLIP

    def test_nonbinary_labels_rejected(self):
        with pytest.raises(ArgumentError):
            LogisticRegressionLearner().fit(np.zeros((10, 1)), np.full(10, 0.5))

    def test_separable_data_is_clipped_not_divergent(self):
        x = np.linspace(-3, 3, 200)[:, None]
        y = (x[:, 0] > 0).astype(float)
        model = LogisticRegressionLearner().fit(x, y)
        pred = model.predict(x)
        assert pred.min() >= PRED_CLIP and pred.max() <= 1 - PRED_CLIP
        assert model.counter.events > 0


class TestBoosting:
    def test_learns_nonlinear_boundary_better_than_logistic(self):
        rng = np.random.default_rng(11)
        n = 3000
        x = rng.normal(size=(n, 2))
        p = expit(3.0 * x[:, 0] * x[:, 1])        # pure interaction
        y = (rng.random(n) < p).astype(float)
        boost = GradientBoostingLearner().fit(x, y)
        logit = LogisticRegressionLearner().fit(x, y)

        def log_loss(pred):
            return -np.mean(y * np.log(pred) + (1 - y) * np.log(1 - pred))

        assert log_loss(boost.predict(x)) < log_loss(logit.predict(x)) - 0.05

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(300, 3))
        y = (rng.random(300) < expit(x[:, 0])).astype(float)
        a = GradientBoostingLearner(n_rounds=40).fit(x, y).predict(x)
        b = GradientBoostingLearner(n_rounds=40).fit(x, y).predict(x)
        assert np.array_equal(a, b)

    def test_degenerate_labels_constant(self):
        x = np.zeros((30, 2))
        model = GradientBoostingLearner().fit(x, np.zeros(30))
        assert isinstance(model, ConstantModel)

    def test_probabilities_in_clip_range(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(500, 2))
        y = (x[:, 0] > 0).astype(float)
        pred = GradientBoostingLearner().fit(x, y).predict(x)
        assert pred.min() >= PRED_CLIP and pred.max() <= 1 - PRED_CLIP


class TestRegistry:
    def test_lookup(self):
        assert isinstance(get_learner("logistic"), LogisticRegressionLearner)
        assert isinstance(get_learner("boost", n_rounds=10), GradientBoostingLearner)
        with pytest.raises(ArgumentError):
            get_learner("superlearner")
