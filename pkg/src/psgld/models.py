"""Concrete sampling targets.

Three built-in targets cover the experiment suite: a diagonal-covariance
Gaussian (direct target, full gradient), Bayesian logistic regression on a
labeled dataset, and a small ReLU/softmax feedforward network with manual
backpropagation.  The Gaussian and logistic models expose payloads for the
compiled chain kernels; the network always runs through the generic
python driver (its gradients are already matrix-level numpy work).
"""

from __future__ import annotations

import numpy as np

from .model_api import (
    DatasetError,
    GradientEstimate,
    PriorConfig,
    TargetModel,
)


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_sigmoid(x):
    """log(sigmoid(x)) without overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = -np.log1p(np.exp(-x[pos]))
    out[~pos] = x[~pos] - np.log1p(np.exp(x[~pos]))
    return out


class GaussianTarget(TargetModel):
    """Diagonal-covariance Gaussian density sampled as a direct target.

    The whole log density plays the role of the likelihood with N = n = 1
    and a flat prior, so every chain step sees the full (non-stochastic)
    gradient -(theta - mean) / cov_diag.
    """

    has_dataset = False
    supports_diag_hessian = True
    name = "gaussian"

    def __init__(self, mean, cov_diag):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.cov_diag = np.asarray(cov_diag, dtype=np.float64)
        if self.mean.shape != self.cov_diag.shape or self.mean.ndim != 1:
            raise ValueError("mean and cov_diag must be flat arrays of equal length")
        if np.any(self.cov_diag <= 0):
            raise ValueError("covariance diagonal must be positive")
        self.dim = self.mean.size
        self.prior = None

    def log_grad(self, theta: np.ndarray) -> np.ndarray:
        return -(np.asarray(theta, dtype=np.float64) - self.mean) / self.cov_diag

    def minibatch_grad(self, theta, indices=None) -> GradientEstimate:
        return GradientEstimate(g_bar=self.log_grad(theta), n=1, N=1)

    def diag_hessian(self, theta, indices=None) -> np.ndarray:
        return -1.0 / self.cov_diag

    def log_posterior(self, theta) -> float:
        d = np.asarray(theta, dtype=np.float64) - self.mean
        return float(-0.5 * np.sum(d * d / self.cov_diag))

    def log_posterior_batch(self, thetas) -> np.ndarray:
        d = np.asarray(thetas, dtype=np.float64) - self.mean
        return -0.5 * np.sum(d * d / self.cov_diag, axis=1)

    def kernel_payload(self):
        return {"kind": "gaussian", "mu": self.mean, "cov_diag": self.cov_diag}


class LogisticRegressionModel(TargetModel):
    """Bayesian logistic regression with labels in {-1, +1}.

    The per-datum log likelihood is log sigmoid(y * theta @ x); the model
    keeps a dense, C-contiguous copy of the design matrix so the chain
    kernels can stream over rows.
    """

    has_dataset = True
    supports_diag_hessian = True
    name = "blr"

    def __init__(self, dataset, prior: PriorConfig):
        X = dataset.features
        if hasattr(X, "toarray"):
            X = X.toarray()
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.y = np.asarray(dataset.labels, dtype=np.float64)
        if set(np.unique(self.y)) - {-1.0, 1.0}:
            raise DatasetError("logistic regression labels must be in {-1, +1}")
        self.N, self.dim = self.X.shape
        self.dataset_size = self.N
        self.prior = prior
        self.classes = np.array([-1, 1])

    def minibatch_grad(self, theta, indices) -> GradientEstimate:
        Xb = self.X[indices]
        yb = self.y[indices]
        z = Xb @ np.asarray(theta, dtype=np.float64)
        w = sigmoid(-yb * z) * yb
        g = (Xb.T @ w) / len(indices)
        return GradientEstimate(g_bar=g, n=len(indices), N=self.N)

    def diag_hessian(self, theta, indices) -> np.ndarray:
        Xb = self.X[indices]
        z = Xb @ np.asarray(theta, dtype=np.float64)
        s = sigmoid(z) * sigmoid(-z)
        return -((Xb * Xb).T @ s) / len(indices)

    def predict(self, theta, x) -> float:
        """Probability of label +1 for feature vector x."""
        return float(sigmoid(np.dot(np.asarray(theta), np.asarray(x))))

    def predict_proba(self, theta, X) -> np.ndarray:
        """Rows of [P(y=-1), P(y=+1)] for a feature matrix."""
        p = sigmoid(np.asarray(X) @ np.asarray(theta))
        return np.column_stack([1.0 - p, p])

    def log_likelihood(self, theta) -> float:
        z = self.X @ np.asarray(theta, dtype=np.float64)
        return float(np.sum(log_sigmoid(self.y * z)))

    def log_posterior(self, theta) -> float:
        theta = np.asarray(theta, dtype=np.float64)
        lp = -0.5 * np.dot(theta, theta) / self.prior.sigma_sq
        return lp + self.log_likelihood(theta)

    def log_posterior_batch(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        out = np.empty(thetas.shape[0])
        chunk = max(1, int(2**22 // max(self.N, 1)))
        for lo in range(0, thetas.shape[0], chunk):
            tc = thetas[lo : lo + chunk]
            Z = tc @ self.X.T
            ll = np.sum(log_sigmoid(self.y * Z), axis=1)
            out[lo : lo + chunk] = ll - 0.5 * np.sum(tc * tc, axis=1) / self.prior.sigma_sq
        return out

    def init_params(self, rng) -> np.ndarray:
        return 0.1 * rng.standard_normal(self.dim)

    def kernel_payload(self):
        return {
            "kind": "blr",
            "X": self.X,
            "y": self.y,
            "inv_prior_var": 1.0 / self.prior.sigma_sq,
        }


def relu(z):
    return np.maximum(z, 0.0)


def softmax(z):
    """Row-wise softmax with max subtraction for overflow safety."""
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class MlpModel(TargetModel):
    """Feedforward ReLU network with softmax output, flat parameter vector.

    ``layer_sizes`` lists every layer including input and output, e.g.
    [784, 100, 10].  Parameters are stored flat; the layout map records
    the (offset, shape) of each weight matrix and bias vector in order,
    partitioning [0, dim) exactly once.  Gradients are mean per-datum
    log-likelihood (negative cross-entropy) gradients from manual
    backpropagation.  No analytic diagonal Hessian is provided, so the
    preconditioner's curvature-correction term is unavailable here.
    """

    has_dataset = True
    supports_diag_hessian = False
    name = "mlp"

    def __init__(self, layer_sizes, dataset, prior: PriorConfig):
        if len(layer_sizes) < 2 or any(s <= 0 for s in layer_sizes):
            raise ValueError("layer_sizes needs >= 2 positive entries")
        self.layer_sizes = list(layer_sizes)
        self.X = np.ascontiguousarray(dataset.features, dtype=np.float64)
        self.labels = np.asarray(dataset.labels, dtype=np.int64)
        self.N = self.X.shape[0]
        self.dataset_size = self.N
        self.n_classes = layer_sizes[-1]
        self.classes = np.arange(self.n_classes)
        if self.X.shape[1] != layer_sizes[0]:
            raise ValueError("feature width does not match the input layer")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise DatasetError("labels outside the declared class range")
        self.prior = prior

        self.layout = []
        offset = 0
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            self.layout.append(("W", offset, (fan_out, fan_in)))
            offset += fan_out * fan_in
            self.layout.append(("b", offset, (fan_out,)))
            offset += fan_out
        self.dim = offset

    def unpack(self, theta):
        """Views of theta as (W, b) pairs per layer."""
        theta = np.asarray(theta)
        params = []
        for i in range(0, len(self.layout), 2):
            _, off_w, shape_w = self.layout[i]
            _, off_b, shape_b = self.layout[i + 1]
            W = theta[off_w : off_w + shape_w[0] * shape_w[1]].reshape(shape_w)
            b = theta[off_b : off_b + shape_b[0]]
            params.append((W, b))
        return params

    def init_params(self, rng) -> np.ndarray:
        theta = np.empty(self.dim)
        for i in range(0, len(self.layout), 2):
            _, off_w, shape_w = self.layout[i]
            _, off_b, shape_b = self.layout[i + 1]
            fan_in = shape_w[1]
            scale = 1.0 / np.sqrt(fan_in)
            n_w = shape_w[0] * shape_w[1]
            theta[off_w : off_w + n_w] = scale * rng.standard_normal(n_w)
            theta[off_b : off_b + shape_b[0]] = scale * rng.standard_normal(shape_b[0])
        return theta

    def forward(self, theta, X) -> np.ndarray:
        """Class probabilities for a feature matrix (rows sum to one)."""
        a = np.atleast_2d(np.asarray(X, dtype=np.float64))
        params = self.unpack(theta)
        for W, b in params[:-1]:
            a = relu(a @ W.T + b)
        W, b = params[-1]
        return softmax(a @ W.T + b)

    predict_proba = forward

    def minibatch_grad(self, theta, indices) -> GradientEstimate:
        X = self.X[indices]
        y = self.labels[indices]
        n = len(indices)
        params = self.unpack(theta)

        acts = [X]
        zs = []
        a = X
        for W, b in params[:-1]:
            z = a @ W.T + b
            zs.append(z)
            a = relu(z)
            acts.append(a)
        W, b = params[-1]
        logits = a @ W.T + b
        probs = softmax(logits)

        onehot = np.zeros_like(probs)
        onehot[np.arange(n), y] = 1.0
        delta = (onehot - probs) / n  # d(mean log-lik)/d(logits)

        grad = np.empty(self.dim)
        for i in range(len(params) - 1, -1, -1):
            _, off_w, shape_w = self.layout[2 * i]
            _, off_b, shape_b = self.layout[2 * i + 1]
            gW = delta.T @ acts[i]
            gb = delta.sum(axis=0)
            grad[off_w : off_w + gW.size] = gW.ravel()
            grad[off_b : off_b + gb.size] = gb
            if i > 0:
                delta = (delta @ params[i][0]) * (zs[i - 1] > 0)
        return GradientEstimate(g_bar=grad, n=n, N=self.N)

    def log_likelihood_batch(self, theta, indices) -> float:
        """Mean log p(y|x) over the given rows."""
        probs = self.forward(theta, self.X[indices])
        rows = np.arange(len(indices))
        return float(np.mean(np.log(probs[rows, self.labels[indices]])))

    def log_posterior(self, theta) -> float:
        theta = np.asarray(theta, dtype=np.float64)
        lp = -0.5 * np.dot(theta, theta) / self.prior.sigma_sq
        probs = self.forward(theta, self.X)
        ll = np.sum(np.log(probs[np.arange(self.N), self.labels]))
        return float(lp + ll)
