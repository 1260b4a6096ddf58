"""Quality measures over sample traces.

Autocovariance / autocorrelation of scalar functionals, integrated
autocorrelation time (ACT) with Geyer initial-positive-sequence
truncation, effective sample size (ESS), posterior averages (plain and
step-size weighted), covariance reconstruction error, posterior
predictive ensembling, thinning, and the bias/variance/risk
decomposition over repeated runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .samplers import SampleTrace

#: lags beyond this are never examined, even for very long traces
MAX_ACT_LAG = 65536


class DegenerateTraceError(ValueError):
    """Trace carries no usable variation (constant functional)."""


@dataclass
class TestFunctional:
    """Named scalar functional of the parameter vector."""

    name: str
    eval: Callable[[np.ndarray], float]

    def over(self, samples: np.ndarray) -> np.ndarray:
        return np.array([self.eval(s) for s in samples], dtype=np.float64)


def coordinate(i: int) -> TestFunctional:
    return TestFunctional(name=f"theta[{i}]", eval=lambda th: float(th[i]))


def coordinate_square(i: int) -> TestFunctional:
    return TestFunctional(name=f"theta[{i}]^2", eval=lambda th: float(th[i]) ** 2)


@dataclass
class DiagnosticsReport:
    """ACT/ESS and estimate summary for one functional of one trace."""

    functional: str
    A: np.ndarray
    gamma: np.ndarray
    tau: float
    ess: float
    phi_hat: float
    phi_hat_weighted: float
    squared_error: Optional[float] = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "functional": self.functional,
            "tau": self.tau,
            "ess": self.ess,
            "phi_hat": self.phi_hat,
            "phi_hat_weighted": self.phi_hat_weighted,
            "acf_head": [float(x) for x in self.gamma[:10]],
        }
        if self.squared_error is not None:
            d["squared_error"] = self.squared_error
        d.update(self.extras)
        return d


def autocovariance(values, max_lag: int) -> np.ndarray:
    """A(t) = (1/(T-t)) sum_i (v_i - vbar)(v_{i+t} - vbar), t = 0..max_lag.

    Computed via FFT; the per-lag 1/(T-t) normalization makes the
    estimator comparable across implementations.
    """
    v = np.asarray(values, dtype=np.float64)
    T = v.size
    if T < 2:
        raise ValueError("need at least two values")
    if not 0 <= max_lag < T:
        raise ValueError("need 0 <= max_lag < len(values)")
    if np.all(v == v[0]):
        return np.zeros(max_lag + 1)  # exactly degenerate, not mean-rounding noise
    d = v - v.mean()
    nfft = 1 << int(np.ceil(np.log2(2 * T)))
    f = np.fft.rfft(d, nfft)
    raw = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    return raw / (T - np.arange(max_lag + 1, dtype=np.float64))


def act(A: np.ndarray) -> float:
    """Integrated autocorrelation time 1/2 + sum of the truncated ACF.

    The infinite sum is truncated with Geyer's initial positive sequence:
    accumulate gamma(t) while the pair sums gamma(2k) + gamma(2k+1) stay
    positive, stop at the first nonpositive pair.  Clamped below at 1/2
    (the independent-sample limit).
    """
    A = np.asarray(A, dtype=np.float64)
    if A[0] <= 0:
        raise DegenerateTraceError("zero-variance functional; ACT undefined")
    gamma = A / A[0]
    tau = 0.5
    # pair k = 0 covers lags (0, 1); gamma(0) = 1 is already the 1/2 term
    if gamma.size < 2 or 1.0 + gamma[1] <= 0:
        return 0.5
    tau += gamma[1]
    k = 1
    while 2 * k + 1 < gamma.size:
        pair = gamma[2 * k] + gamma[2 * k + 1]
        if pair <= 0:
            break
        tau += pair
        k += 1
    return max(tau, 0.5)


def ess(T: int, tau: float) -> float:
    """Effective sample size T / (2 * tau)."""
    if tau < 0.5:
        raise ValueError("tau below the independence floor of 1/2")
    return T / (2.0 * tau)


def act_of_values(values, max_lag: Optional[int] = None) -> float:
    v = np.asarray(values, dtype=np.float64)
    if max_lag is None:
        max_lag = min(v.size - 1, MAX_ACT_LAG)
    return act(autocovariance(v, max_lag))


def ess_of_values(values, max_lag: Optional[int] = None) -> float:
    v = np.asarray(values, dtype=np.float64)
    return ess(v.size, act_of_values(v, max_lag))


def coordinate_ess(trace: SampleTrace) -> np.ndarray:
    """ESS of every coordinate of the trace (min over this is the
    conservative whole-chain figure)."""
    return np.array(
        [ess_of_values(trace.samples[:, i]) for i in range(trace.dim)]
    )


def posterior_average(trace: SampleTrace, phi: TestFunctional,
                      weighted: bool = False) -> float:
    """Plain mean of phi over the trace, or the step-size weighted
    average sum(eps_t phi_t) / sum(eps_t) over the recorded samples."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    vals = phi.over(trace.samples)
    if weighted:
        w = trace.eps
        return float(np.sum(w * vals) / np.sum(w))
    return float(np.mean(vals))


def sample_covariance(samples: np.ndarray) -> np.ndarray:
    """Population-normalized (1/M) covariance of the recorded samples."""
    if samples.shape[0] < 2:
        raise ValueError("need at least two samples")
    d = samples - samples.mean(axis=0)
    return (d.T @ d) / samples.shape[0]


def covariance_error(trace: SampleTrace, true_cov) -> float:
    """Frobenius norm of (sample covariance - true covariance)."""
    true_cov = np.asarray(true_cov, dtype=np.float64)
    if true_cov.ndim == 1:
        true_cov = np.diag(true_cov)
    if true_cov.shape[0] != trace.dim:
        raise ValueError("true covariance dimension mismatch")
    return float(np.linalg.norm(sample_covariance(trace.samples) - true_cov))


def ensemble_proba(trace: SampleTrace, model, X) -> np.ndarray:
    """Unweighted mean of per-sample predictive distributions."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    acc = None
    for theta in trace.samples:
        p = model.predict_proba(theta, X)
        acc = p if acc is None else acc + p
    return acc / len(trace)


def predictive_estimate(trace: SampleTrace, model, x) -> np.ndarray:
    """Posterior predictive class distribution for one input."""
    return ensemble_proba(trace, model, np.atleast_2d(x))[0]


def test_error(trace: SampleTrace, model, test_set) -> float:
    """Ensemble misclassification percentage on a labeled test set.

    Predicts argmax of the averaged class distribution; argmax ties
    resolve to the lowest class index.
    """
    labels = np.asarray(test_set.labels)
    if labels.size == 0:
        raise ValueError("empty test set")
    X = test_set.features
    if hasattr(X, "toarray"):
        X = X.toarray()
    proba = ensemble_proba(trace, model, X)
    predicted = model.classes[np.argmax(proba, axis=1)]
    return float(np.mean(predicted != labels) * 100.0)


def point_test_error(theta: np.ndarray, model, test_set) -> float:
    """Single-parameter (MAP-style) misclassification percentage."""
    labels = np.asarray(test_set.labels)
    if labels.size == 0:
        raise ValueError("empty test set")
    X = test_set.features
    if hasattr(X, "toarray"):
        X = X.toarray()
    proba = model.predict_proba(theta, X)
    predicted = model.classes[np.argmax(proba, axis=1)]
    return float(np.mean(predicted != labels) * 100.0)


def thin(trace: SampleTrace, k: int) -> SampleTrace:
    """Keep every k-th recorded sample (the first, then strides of k).

    Provenance is preserved: S_T is unchanged and the thinning metadata
    multiplies by k.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    return SampleTrace(
        samples=trace.samples[::k].copy(),
        eps=trace.eps[::k].copy(),
        S_T=trace.S_T,
        total_iters=trace.total_iters,
        burn_in=trace.burn_in,
        thinning=trace.thinning * k,
        seed=trace.seed,
        algorithm=trace.algorithm,
        model_name=trace.model_name,
        schedule=trace.schedule,
        extras=dict(trace.extras),
    )


def risk_decomposition(estimates, ground_truth: float):
    """(bias, variance, risk) of repeated-run estimates against a truth.

    bias uses the mean estimate, variance is the sample (ddof=1)
    variance, and risk = bias^2 + variance; with the population (1/n)
    variance this equals the mean squared error exactly.
    """
    est = np.asarray(estimates, dtype=np.float64)
    if est.size < 2:
        raise ValueError("need at least two independent-run estimates")
    bias = float(est.mean() - ground_truth)
    variance = float(np.var(est, ddof=1))
    return bias, variance, bias * bias + variance


def diagnose(trace: SampleTrace, phi: TestFunctional,
             ground_truth: Optional[float] = None,
             max_lag: Optional[int] = None) -> DiagnosticsReport:
    """Full per-functional report: ACT, ESS and both posterior averages."""
    vals = phi.over(trace.samples)
    if max_lag is None:
        max_lag = min(vals.size - 1, MAX_ACT_LAG)
    A = autocovariance(vals, max_lag)
    tau = act(A)
    n_eff = ess(vals.size, tau)
    plain = float(np.mean(vals))
    w = trace.eps
    weighted = float(np.sum(w * vals) / np.sum(w))
    sq = None if ground_truth is None else float((plain - ground_truth) ** 2)
    return DiagnosticsReport(
        functional=phi.name,
        A=A,
        gamma=A / A[0] if A[0] > 0 else A,
        tau=tau,
        ess=n_eff,
        phi_hat=plain,
        phi_hat_weighted=weighted,
        squared_error=sq,
        extras={"n_samples": int(vals.size)},
    )
