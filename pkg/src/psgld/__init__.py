"""Preconditioned stochastic-gradient Langevin sampling toolkit.

Samplers (SGD / SGLD / preconditioned SGLD / RMSprop) over pluggable
targets, MCMC quality diagnostics (ACT, ESS, bias/variance/risk),
ground-truth oracles (random-walk Metropolis, grid quadrature), dataset
ingestion, and a CLI that reproduces the standard experiments at desk
scale.  Hot chain loops run through a compiled extension when available;
``psgld.kernels.BACKEND`` names the backend selected at import.
"""

from .kernels import BACKEND
from .model_api import (
    GradientEstimate,
    HessianUnsupported,
    Minibatch,
    PriorConfig,
    TargetModel,
)
from .models import GaussianTarget, LogisticRegressionModel, MlpModel
from .samplers import (
    Assumption1Warning,
    BlockDecaySchedule,
    ConstantSchedule,
    DivergenceError,
    PolynomialSchedule,
    PreconditionerState,
    SampleTrace,
    SamplerConfig,
    gamma_term,
    precond_update,
    psgld_step,
    rmsprop_step,
    run_chain,
    sgd_step,
    sgld_step,
    step_size,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Assumption1Warning",
    "BlockDecaySchedule",
    "ConstantSchedule",
    "DivergenceError",
    "GaussianTarget",
    "GradientEstimate",
    "HessianUnsupported",
    "LogisticRegressionModel",
    "Minibatch",
    "MlpModel",
    "PolynomialSchedule",
    "PreconditionerState",
    "PriorConfig",
    "SampleTrace",
    "SamplerConfig",
    "TargetModel",
    "gamma_term",
    "precond_update",
    "psgld_step",
    "rmsprop_step",
    "run_chain",
    "sgd_step",
    "sgld_step",
    "step_size",
]
