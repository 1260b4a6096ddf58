"""Contract shared by every sampled target.

A target model owns a parameter space of fixed dimension and provides the
pieces the samplers consume: the log-prior gradient, a minibatch mean
log-likelihood gradient, and (optionally) the diagonal of the Hessian of
that mean gradient, which the preconditioner's curvature-correction term
needs.  All parameter vectors are flat float64 numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class HessianUnsupported(Exception):
    """Raised by models without an analytic diagonal Hessian."""


class DatasetError(Exception):
    """Raised for invalid minibatch indices or malformed datasets."""


@dataclass(frozen=True)
class PriorConfig:
    """Isotropic Gaussian prior N(0, sigma_sq * I)."""

    sigma_sq: float

    def __post_init__(self):
        if not self.sigma_sq > 0:
            raise ValueError(f"sigma_sq must be positive, got {self.sigma_sq}")


@dataclass
class GradientEstimate:
    """Minibatch mean log-likelihood gradient with its batch provenance.

    ``g_bar`` is the arithmetic mean over the batch; the drift term of the
    samplers rescales it by the dataset size ``N``.
    """

    g_bar: np.ndarray
    n: int
    N: int

    def __post_init__(self):
        if not (0 < self.n <= self.N):
            raise ValueError(f"need 0 < n <= N, got n={self.n}, N={self.N}")


@dataclass(frozen=True)
class Minibatch:
    """Indices of the data rows participating in one gradient estimate."""

    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("minibatch needs a flat, nonempty index list")
        if np.unique(idx).size != idx.size:
            raise ValueError("duplicate indices within one minibatch")
        object.__setattr__(self, "indices", idx)

    @property
    def n(self) -> int:
        return int(self.indices.size)


def log_prior_grad(theta: np.ndarray, prior: PriorConfig | None) -> np.ndarray:
    """Gradient of the log prior at ``theta``: -theta / sigma_sq.

    A ``None`` prior means an (improper) flat prior with zero gradient,
    used by direct targets whose full density lives in the likelihood.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if prior is None:
        return np.zeros_like(theta)
    return -theta / prior.sigma_sq


class TargetModel:
    """Base class for sampled targets.

    Subclasses set ``dim``, ``prior`` and ``name`` and implement the
    gradient methods.  Models are immutable after construction and safe
    to share read-only across chains.
    """

    dim: int
    prior: PriorConfig | None
    name: str = "target"

    #: dataset size N; direct targets without data use N = 1
    dataset_size: int = 1
    #: whether minibatches index real data rows
    has_dataset: bool = False
    #: whether diag_hessian is available (needed for the Gamma term)
    supports_diag_hessian: bool = False

    def log_prior_grad(self, theta: np.ndarray) -> np.ndarray:
        return log_prior_grad(theta, self.prior)

    def minibatch_grad(self, theta: np.ndarray, indices: np.ndarray) -> GradientEstimate:
        raise NotImplementedError

    def diag_hessian(self, theta: np.ndarray, indices: np.ndarray) -> np.ndarray:
        """Diagonal of the Hessian of the mean minibatch log-likelihood."""
        raise HessianUnsupported(f"{self.name} has no analytic diagonal Hessian")

    def log_posterior(self, theta: np.ndarray) -> float:
        """Full-data unnormalized log posterior (oracle entry point)."""
        raise NotImplementedError

    def log_posterior_batch(self, thetas: np.ndarray) -> np.ndarray:
        """Vectorized log posterior over rows of ``thetas``."""
        return np.array([self.log_posterior(t) for t in thetas])

    def init_params(self, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal(self.dim)

    def kernel_payload(self):
        """Arrays handed to the compiled chain kernels, or None."""
        return None

    def _check_indices(self, indices: np.ndarray):
        indices = np.asarray(indices)
        if indices.size and (indices.min() < 0 or indices.max() >= self.dataset_size):
            raise DatasetError(
                f"minibatch index out of range for dataset of size {self.dataset_size}"
            )


def minibatch_grad(model: TargetModel, theta: np.ndarray, batch: Minibatch) -> GradientEstimate:
    """Validated minibatch mean gradient: mean of per-datum log-lik gradients."""
    model._check_indices(batch.indices)
    return model.minibatch_grad(np.asarray(theta, dtype=np.float64), batch.indices)


def diag_hessian(model: TargetModel, theta: np.ndarray, batch: Minibatch) -> np.ndarray:
    """Validated diagonal Hessian of the mean minibatch log-likelihood.

    Raises ``HessianUnsupported`` for models that do not declare support;
    callers must then run the preconditioned sampler without its
    curvature-correction term.
    """
    if not model.supports_diag_hessian:
        raise HessianUnsupported(f"{model.name} has no analytic diagonal Hessian")
    model._check_indices(batch.indices)
    return model.diag_hessian(np.asarray(theta, dtype=np.float64), batch.indices)
