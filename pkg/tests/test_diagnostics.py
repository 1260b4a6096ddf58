import numpy as np
import pytest

from psgld.diagnostics import (
    DegenerateTraceError,
    TestFunctional,
    act,
    act_of_values,
    autocovariance,
    coordinate,
    coordinate_square,
    covariance_error,
    diagnose,
    ensemble_proba,
    ess,
    ess_of_values,
    posterior_average,
    predictive_estimate,
    risk_decomposition,
    sample_covariance,
    thin,
)
from psgld.diagnostics import test_error as ensemble_test_error
from psgld.samplers import SampleTrace


def make_trace(samples, eps=None, thinning=1, S_T=None):
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 1 and samples.shape[1] > 1 and samples.ndim == 2:
        pass
    n = samples.shape[0]
    eps = np.ones(n) if eps is None else np.asarray(eps, dtype=np.float64)
    return SampleTrace(
        samples=samples,
        eps=eps,
        S_T=float(eps.sum()) if S_T is None else S_T,
        total_iters=n,
        burn_in=0,
        thinning=thinning,
        seed=0,
        algorithm="test",
        model_name="test",
    )


def ar1(rho, T, seed=0, sigma_marginal=1.0):
    rng = np.random.default_rng(seed)
    x = np.empty(T)
    x[0] = rng.standard_normal() * sigma_marginal
    innov = rng.standard_normal(T) * sigma_marginal * np.sqrt(1 - rho * rho)
    for t in range(1, T):
        x[t] = rho * x[t - 1] + innov[t]
    return x


class TestAutocovariance:
    def test_constant_sequence_is_all_zeros(self):
        A = autocovariance(np.full(50, 3.7), max_lag=5)
        np.testing.assert_allclose(A, np.zeros(6), atol=1e-12)
        with pytest.raises(DegenerateTraceError):
            act(A)

    def test_alternating_sequence(self):
        v = np.array([1.0, -1.0] * 4)
        A = autocovariance(v, max_lag=1)
        assert A[1] / A[0] == pytest.approx(-1.0, abs=1e-12)

    def test_iid_normals(self):
        rng = np.random.default_rng(123)
        v = rng.standard_normal(100_000)
        A = autocovariance(v, max_lag=10)
        assert abs(A[0] - 1.0) < 0.02
        assert abs(A[1] / A[0]) < 0.02

    def test_normalization_per_lag(self):
        # direct O(T^2) reference with the same 1/(T-t) convention
        rng = np.random.default_rng(5)
        v = rng.standard_normal(200)
        A = autocovariance(v, max_lag=20)
        d = v - v.mean()
        for t in (0, 1, 7, 20):
            direct = np.dot(d[: 200 - t], d[t:]) / (200 - t)
            assert A[t] == pytest.approx(direct, rel=1e-10)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            autocovariance(np.array([1.0]), max_lag=0)
        with pytest.raises(ValueError):
            autocovariance(np.ones(10), max_lag=10)


class TestAct:
    def test_iid_limit(self):
        rng = np.random.default_rng(7)
        v = rng.standard_normal(100_000)
        tau = act_of_values(v)
        assert tau == pytest.approx(0.5, abs=0.05)
        assert ess_of_values(v) == pytest.approx(100_000, rel=0.1)

    def test_geometric_acf(self):
        gamma = 0.5 ** np.arange(60)
        tau = act(gamma)  # A(0) = 1 so A doubles as the ACF
        assert tau == pytest.approx(1.5, abs=1e-12)

    def test_ar1_closed_form(self):
        v = ar1(0.9, 100_000, seed=21)
        tau = act_of_values(v)
        assert abs(tau - 9.5) / 9.5 < 0.05

    def test_clamped_below_at_half(self):
        gamma = np.array([1.0, -0.49, 0.0, 0.0])
        assert act(gamma) == 0.5


class TestEss:
    def test_independent_case(self):
        assert ess(1000, 0.5) == 1000

    def test_direct_arithmetic(self):
        assert ess(300, 1.5) == pytest.approx(100.0)
        assert ess(100_000, 9.5) == pytest.approx(5263.1578947368425)

    def test_floor_enforced(self):
        with pytest.raises(ValueError):
            ess(100, 0.2)


class TestPosteriorAverage:
    def test_equal_weights_match_plain(self):
        tr = make_trace([[0.0], [1.0], [2.0]], eps=[0.3, 0.3, 0.3])
        phi = coordinate(0)
        assert posterior_average(tr, phi, weighted=True) == pytest.approx(
            posterior_average(tr, phi, weighted=False)
        )

    def test_constant_functional(self):
        tr = make_trace([[0.0], [5.0]], eps=[1.0, 9.0])
        phi = TestFunctional("c", lambda th: 4.25)
        assert posterior_average(tr, phi, weighted=True) == 4.25
        assert posterior_average(tr, phi, weighted=False) == 4.25

    def test_weighted_two_sample(self):
        tr = make_trace([[0.0], [1.0]], eps=[1.0, 3.0])
        assert posterior_average(tr, coordinate(0), weighted=True) == pytest.approx(0.75)

    def test_empty_trace_rejected(self):
        tr = make_trace(np.zeros((0, 1)).reshape(0, 1), eps=np.zeros(0))
        with pytest.raises(ValueError):
            posterior_average(tr, coordinate(0))


class TestCovarianceError:
    def test_four_point_construction(self):
        # axis-aligned points whose sample covariance is exactly diag(0.16, 1)
        r = np.sqrt(2.0)
        pts = [[0.4 * r, 0.0], [-0.4 * r, 0.0], [0.0, r], [0.0, -r]] * 5
        tr = make_trace(pts)
        assert covariance_error(tr, np.diag([0.16, 1.0])) == pytest.approx(0.0, abs=1e-15)

    def test_self_covariance_is_zero(self):
        rng = np.random.default_rng(3)
        tr = make_trace(rng.standard_normal((500, 2)))
        C = sample_covariance(tr.samples)
        assert covariance_error(tr, C) == pytest.approx(0.0, abs=1e-12)

    def test_exact_gaussian_draws(self):
        rng = np.random.default_rng(17)
        draws = rng.standard_normal((100_000, 2)) * np.sqrt([0.16, 1.0])
        tr = make_trace(draws)
        assert covariance_error(tr, np.diag([0.16, 1.0])) < 0.02

    def test_diagonal_shorthand_accepted(self):
        r = np.sqrt(2.0)
        tr = make_trace([[0.4 * r, 0.0], [-0.4 * r, 0.0], [0.0, r], [0.0, -r]])
        assert covariance_error(tr, [0.16, 1.0]) == pytest.approx(0.0, abs=1e-15)


class _TwoClassStub:
    classes = np.array([0, 1])

    def predict_proba(self, theta, X):
        X = np.atleast_2d(X)
        p = np.clip(theta[0], 0.0, 1.0) * np.ones(X.shape[0])
        return np.column_stack([1 - p, p])


class TestPredictive:
    def test_single_sample_trace(self):
        tr = make_trace([[0.9]])
        out = predictive_estimate(tr, _TwoClassStub(), np.zeros(3))
        np.testing.assert_allclose(out, [0.1, 0.9])

    def test_two_sample_mean(self):
        tr = make_trace([[1.0], [0.0]])
        out = predictive_estimate(tr, _TwoClassStub(), np.zeros(3))
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_rows_are_distributions(self):
        rng = np.random.default_rng(1)
        tr = make_trace(rng.random((5, 1)))
        probs = ensemble_proba(tr, _TwoClassStub(), rng.random((7, 3)))
        assert probs.shape == (7, 2)
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-10)


class TestTestError:
    class _Dataset:
        def __init__(self, X, y):
            self.features = X
            self.labels = y

    def test_all_correct(self):
        ds = self._Dataset(np.zeros((4, 2)), np.ones(4, dtype=int))
        tr = make_trace([[1.0]])  # always predicts class 1
        assert ensemble_test_error(tr, _TwoClassStub(), ds) == 0.0

    def test_all_wrong(self):
        ds = self._Dataset(np.zeros((4, 2)), np.zeros(4, dtype=int))
        tr = make_trace([[1.0]])
        assert ensemble_test_error(tr, _TwoClassStub(), ds) == 100.0

    def test_tie_breaks_to_lowest_class(self):
        ds = self._Dataset(np.zeros((2, 2)), np.array([0, 1]))
        tr = make_trace([[0.5]])  # exact tie
        assert ensemble_test_error(tr, _TwoClassStub(), ds) == 50.0

    def test_empty_test_set_rejected(self):
        ds = self._Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int))
        with pytest.raises(ValueError):
            ensemble_test_error(make_trace([[1.0]]), _TwoClassStub(), ds)


class TestThin:
    def test_identity(self):
        tr = make_trace(np.arange(10.0)[:, None])
        t1 = thin(tr, 1)
        np.testing.assert_array_equal(t1.samples, tr.samples)
        assert t1.thinning == tr.thinning

    def test_counting(self):
        tr = make_trace(np.arange(7.0)[:, None], thinning=100)
        t3 = thin(tr, 3)
        np.testing.assert_array_equal(t3.samples.ravel(), [0.0, 3.0, 6.0])
        assert t3.thinning == 300
        assert t3.S_T == tr.S_T

    def test_k_validation(self):
        with pytest.raises(ValueError):
            thin(make_trace([[1.0]]), 0)


class TestRiskDecomposition:
    def test_perfect_estimates(self):
        assert risk_decomposition([2.0, 2.0, 2.0], 2.0) == (0.0, 0.0, 0.0)

    def test_direct_arithmetic(self):
        bias, var, risk = risk_decomposition([1.0, 3.0], 2.0)
        assert bias == 0.0
        assert var == pytest.approx(2.0)
        assert risk == pytest.approx(2.0)

    def test_identity_with_population_variance(self):
        rng = np.random.default_rng(7)
        est = rng.standard_normal(40) + 0.3
        truth = 0.1
        bias, _, _ = risk_decomposition(est, truth)
        mse = np.mean((est - truth) ** 2)
        assert bias**2 + np.var(est) == pytest.approx(mse, rel=1e-12)

    def test_requires_two_runs(self):
        with pytest.raises(ValueError):
            risk_decomposition([1.0], 1.0)

    def test_variance_matches_a0_over_ess_on_ar1(self):
        # repeated-run variance of the chain mean against A(0)/ESS
        rho, T, R = 0.9, 2000, 400
        rng = np.random.default_rng(11)
        x = np.empty((R, T))
        x[:, 0] = rng.standard_normal(R)
        innov = rng.standard_normal((R, T)) * np.sqrt(1 - rho * rho)
        for t in range(1, T):
            x[:, t] = rho * x[:, t - 1] + innov[:, t]
        means = x.mean(axis=1)
        empirical_var = means.var(ddof=1)

        long_chain = ar1(rho, 100_000, seed=3)
        A0 = autocovariance(long_chain, 1)[0]
        tau = act_of_values(long_chain)
        predicted = A0 / ess(T, tau)
        assert abs(empirical_var - predicted) / predicted < 0.2


class TestDiagnoseReport:
    def test_report_fields_and_squared_error(self):
        rng = np.random.default_rng(2)
        tr = make_trace(rng.standard_normal((5000, 2)))
        rep = diagnose(tr, coordinate_square(0), ground_truth=1.0)
        assert rep.functional == "theta[0]^2"
        assert rep.gamma[0] == pytest.approx(1.0)
        assert rep.ess <= 5000 * 1.2
        assert rep.squared_error == pytest.approx((rep.phi_hat - 1.0) ** 2)
        d = rep.to_dict()
        assert {"tau", "ess", "phi_hat", "phi_hat_weighted"} <= d.keys()
