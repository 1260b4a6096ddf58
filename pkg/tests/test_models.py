import numpy as np
import pytest

from psgld.data_io import Dataset
from psgld.model_api import PriorConfig
from psgld.models import (
    GaussianTarget,
    LogisticRegressionModel,
    MlpModel,
    log_sigmoid,
    sigmoid,
)


class TestGaussianTarget:
    def test_gradient_at_mode_is_zero(self):
        t = GaussianTarget(mean=np.array([0.3, -0.7]), cov_diag=np.array([0.16, 1.0]))
        np.testing.assert_array_equal(t.log_grad(t.mean), [0.0, 0.0])

    def test_gradient_closed_form(self):
        t = GaussianTarget(mean=np.zeros(2), cov_diag=np.array([0.16, 1.0]))
        np.testing.assert_allclose(t.log_grad(np.array([0.4, 1.0])), [-2.5, -1.0])

    def test_gradient_odd_symmetry(self):
        t = GaussianTarget(mean=np.zeros(2), cov_diag=np.array([0.16, 1.0]))
        np.testing.assert_allclose(t.log_grad(np.array([-0.4, -1.0])), [2.5, 1.0])

    def test_gradient_linear_in_displacement(self):
        rng = np.random.default_rng(0)
        t = GaussianTarget(mean=rng.standard_normal(3), cov_diag=np.array([0.5, 2.0, 1.0]))
        d = rng.standard_normal(3)
        for a in (-2.0, 0.25, 3.0):
            np.testing.assert_allclose(
                t.log_grad(t.mean + a * d), a * t.log_grad(t.mean + d)
            )

    def test_rejects_bad_covariance(self):
        with pytest.raises(ValueError):
            GaussianTarget(mean=np.zeros(2), cov_diag=np.array([0.0, 1.0]))


class TestSigmoid:
    def test_extreme_arguments_stay_finite(self):
        vals = sigmoid(np.array([-1e4, -50.0, 0.0, 50.0, 1e4]))
        assert np.all(np.isfinite(vals))
        assert vals[0] == 0.0 and vals[-1] == 1.0

    def test_log_sigmoid_matches_log_of_sigmoid(self):
        x = np.linspace(-30, 30, 101)
        np.testing.assert_allclose(log_sigmoid(x), np.log(sigmoid(x)), atol=1e-12)


class TestBlrPredict:
    def _model(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        y = np.array([1, -1])
        return LogisticRegressionModel(
            Dataset(features=X, labels=y, name="t"), PriorConfig(sigma_sq=1.0)
        )

    def test_zero_weights_give_half(self):
        m = self._model()
        assert m.predict(np.zeros(2), np.array([5.0, -3.0])) == 0.5

    def test_log_three_margin(self):
        m = self._model()
        # theta @ x = ln 3  ->  p = 3/4
        assert m.predict(np.array([np.log(3.0), 0.0]), np.array([1.0, 0.0])) == pytest.approx(0.75)

    def test_complement_symmetry(self):
        m = self._model()
        assert m.predict(np.array([-np.log(3.0), 0.0]), np.array([1.0, 0.0])) == pytest.approx(0.25)

    def test_label_validation(self):
        X = np.eye(2)
        with pytest.raises(Exception):
            LogisticRegressionModel(
                Dataset(features=X, labels=np.array([0, 2]), name="bad"),
                PriorConfig(sigma_sq=1.0),
            )


def _toy_mlp(layers=(4, 3, 2), n=12, seed=3):
    rng = np.random.default_rng(seed)
    ds = Dataset(
        features=rng.random((n, layers[0])),
        labels=rng.integers(0, layers[-1], n),
        name="toy",
    )
    return MlpModel(list(layers), ds, PriorConfig(sigma_sq=1.0)), rng


class TestMlpForward:
    def test_zero_parameters_give_uniform(self):
        model, _ = _toy_mlp(layers=(4, 5, 10))
        probs = model.forward(np.zeros(model.dim), np.ones(4))
        np.testing.assert_allclose(probs, np.full((1, 10), 0.1), atol=1e-12)

    def test_single_linear_layer_matches_logits(self):
        model, rng = _toy_mlp(layers=(3, 2))
        theta = model.init_params(rng)
        (W, b), = model.unpack(theta)
        x = rng.random(3)
        probs = model.forward(theta, x)[0]
        z = W @ x + b
        expected = np.exp(z - z.max())
        expected /= expected.sum()
        np.testing.assert_allclose(probs, expected, atol=1e-12)

    def test_probabilities_normalized(self):
        model, rng = _toy_mlp(layers=(4, 6, 3))
        theta = 3.0 * model.init_params(rng)
        probs = model.forward(theta, rng.random((20, 4)))
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_layout_partitions_parameter_vector(self):
        model, _ = _toy_mlp(layers=(4, 3, 2))
        covered = np.zeros(model.dim, dtype=int)
        for _, off, shape in model.layout:
            covered[off : off + int(np.prod(shape))] += 1
        assert np.all(covered == 1)


class TestMlpBackprop:
    def test_gradient_matches_finite_differences(self):
        model, rng = _toy_mlp(layers=(4, 3, 2), n=12)
        theta = model.init_params(rng)
        idx = np.arange(5)
        g = model.minibatch_grad(theta, idx).g_bar
        h = 1e-5
        for j in range(model.dim):
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            fd = (
                model.log_likelihood_batch(tp, idx)
                - model.log_likelihood_batch(tm, idx)
            ) / (2 * h)
            assert abs(g[j] - fd) / max(abs(fd), 1e-8) < 1e-5

    def test_relu_regions_match_fd_away_from_kinks(self):
        model, rng = _toy_mlp(layers=(3, 4, 2), n=10)
        idx = np.arange(6)
        checked = 0
        for _ in range(12):
            theta = model.init_params(rng)
            params = model.unpack(theta)
            z = model.X[idx] @ params[0][0].T + params[0][1]
            if np.min(np.abs(z)) < 1e-4:
                continue  # too close to a kink for clean differences
            g = model.minibatch_grad(theta, idx).g_bar
            h = 1e-6
            for j in rng.choice(model.dim, size=6, replace=False):
                tp, tm = theta.copy(), theta.copy()
                tp[j] += h
                tm[j] -= h
                fd = (
                    model.log_likelihood_batch(tp, idx)
                    - model.log_likelihood_batch(tm, idx)
                ) / (2 * h)
                assert abs(g[j] - fd) / max(abs(fd), 1e-6) < 1e-4
            checked += 1
        assert checked >= 5

    def test_saturated_prediction_has_tiny_gradient(self):
        rng = np.random.default_rng(9)
        ds = Dataset(features=rng.random((4, 2)), labels=np.zeros(4, dtype=int))
        model = MlpModel([2, 2], ds, PriorConfig(sigma_sq=1.0))
        # logits strongly favor the true class everywhere
        theta = np.array([50.0, 50.0, -50.0, -50.0, 50.0, -50.0])
        g = model.minibatch_grad(theta, np.arange(4)).g_bar
        assert np.max(np.abs(g)) < 1e-10

    def test_duplicated_batch_leaves_mean_unchanged(self):
        model, rng = _toy_mlp()
        theta = model.init_params(rng)
        idx = np.array([0, 1, 2])
        doubled = np.array([0, 1, 2, 0, 1, 2])
        g1 = model.minibatch_grad(theta, idx).g_bar
        g2 = model.minibatch_grad(theta, doubled).g_bar
        np.testing.assert_allclose(g1, g2, atol=1e-14)


class TestBlrGradientIdentity:
    def test_identity_sigma_form(self):
        # grad log p(y|x, theta) = sigma(-y theta@x) * y * x
        rng = np.random.default_rng(4)
        X = rng.standard_normal((8, 3))
        y = np.where(rng.random(8) < 0.5, 1, -1)
        model = LogisticRegressionModel(
            Dataset(features=X, labels=y, name="id"), PriorConfig(sigma_sq=1.0)
        )
        theta = rng.standard_normal(3)
        for i in range(8):
            g = model.minibatch_grad(theta, np.array([i])).g_bar
            z = y[i] * (X[i] @ theta)
            np.testing.assert_allclose(g, sigmoid(np.array([-z]))[0] * y[i] * X[i])
