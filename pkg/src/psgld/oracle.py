"""Ground-truth machinery.

Two independent references for posterior expectations: a full-data
random-walk Metropolis chain (asymptotically exact, any dimension the
proposal can handle) and trapezoid-rule grid quadrature for targets of
dimension <= 2.  These provide the truth values behind the MSE, bias and
risk checks; they never share code with the stochastic-gradient
samplers they validate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .diagnostics import TestFunctional
from .samplers import SampleTrace

MH_BLOCK = 8192
#: this many consecutive rejections means the proposal is misconfigured
MH_STALL_LIMIT = 10_000


@dataclass
class MhConfig:
    """Random-walk Metropolis run parameters.

    ``proposal_std=None`` triggers a pilot-run search for an acceptance
    rate in the 25-40% band before the main chain starts.
    """

    steps: int
    burn_in: int = 0
    proposal_std: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 <= self.burn_in < self.steps:
            raise ValueError("need 0 <= burn_in < steps")
        if self.proposal_std is not None and not self.proposal_std > 0:
            raise ValueError("proposal_std must be positive")


class MhStalledError(RuntimeError):
    """No acceptance over MH_STALL_LIMIT consecutive proposals."""


def _mh_rngs(seed):
    init_ss, prop_ss, unif_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.Generator(np.random.Philox(init_ss)),
        np.random.Generator(np.random.Philox(prop_ss)),
        np.random.Generator(np.random.Philox(unif_ss)),
    )


def _generic_mh_block(model, theta, logp, std, Z, U, out, consec_in):
    acc = 0
    consec = consec_in
    max_run = consec_in
    logU = np.log(U)
    for j in range(Z.shape[0]):
        cand = theta + std * Z[j]
        lp_c = model.log_posterior(cand)
        if logU[j] < lp_c - logp[0]:
            theta[:] = cand
            logp[0] = lp_c
            acc += 1
            consec = 0
        else:
            consec += 1
            if consec > max_run:
                max_run = consec
        out[j] = theta
    return acc, consec, max_run


def _run_mh(model, std, steps, seed, backend=None):
    """Core loop: returns (states, acceptance_rate) or raises on stall."""
    D = model.dim
    init_rng, prop_rng, unif_rng = _mh_rngs(seed)
    theta = np.array(model.init_params(init_rng), dtype=np.float64)
    logp = np.array([model.log_posterior(theta)])

    payload = model.kernel_payload()
    impl = kernels.get_backend(backend) if payload is not None else None
    states = np.empty((steps, D))
    accepts = 0
    consec = 0
    t0 = 0
    while t0 < steps:
        B = min(MH_BLOCK, steps - t0)
        Z = prop_rng.standard_normal((B, D))
        U = unif_rng.random(B)
        out = states[t0 : t0 + B]
        if payload is None:
            acc, consec, max_run = _generic_mh_block(
                model, theta, logp, std, Z, U, out, consec
            )
        elif payload["kind"] == "gaussian":
            acc, consec, max_run = impl.mh_gaussian_block(
                theta, logp, payload["mu"], payload["cov_diag"], std, Z, U,
                out, consec,
            )
        else:
            acc, consec, max_run = impl.mh_blr_block(
                theta, logp, payload["X"], payload["y"],
                1.0 / payload["inv_prior_var"], std, Z, U, out, consec,
            )
        if max_run >= MH_STALL_LIMIT:
            raise MhStalledError(
                f"no acceptance over {MH_STALL_LIMIT} consecutive proposals "
                f"(proposal_std={std:.3g})"
            )
        accepts += acc
        t0 += B
    return states, accepts / steps


def tune_proposal(model, seed: int = 0, pilot_steps: int = 2000,
                  target=(0.25, 0.40), start: float = 0.1) -> float:
    """Pilot-run search for a proposal width in the target acceptance band.

    Acceptance is monotone decreasing in the width, so a geometric
    bracket-and-bisect converges in a few pilots.
    """
    lo_std, hi_std = None, None
    std = start
    for _ in range(40):
        try:
            _, rate = _run_mh(model, std, pilot_steps, seed)
        except MhStalledError:
            rate = 0.0
        if rate > target[1]:
            lo_std = std  # too timid: acceptance too high
            std = std * 4.0 if hi_std is None else np.sqrt(std * hi_std)
        elif rate < target[0]:
            hi_std = std
            std = std / 4.0 if lo_std is None else np.sqrt(std * lo_std)
        else:
            return float(std)
    return float(std)


def mh_chain(model, config: MhConfig, backend=None) -> SampleTrace:
    """Full-data random-walk Metropolis reference chain.

    Gaussian proposals of width ``proposal_std``, acceptance probability
    min(1, exp(delta log posterior)); every post-burn-in state is
    recorded (duplicates included).  The trace carries unit step-size
    weights so weighted and plain averages coincide.
    """
    std = config.proposal_std
    if std is None:
        std = tune_proposal(model, seed=config.seed)
    states, rate = _run_mh(model, std, config.steps, config.seed, backend)
    samples = states[config.burn_in :]
    return SampleTrace(
        samples=samples,
        eps=np.ones(samples.shape[0]),
        S_T=float(samples.shape[0]),
        total_iters=config.steps,
        burn_in=config.burn_in,
        thinning=1,
        seed=config.seed,
        algorithm="mh",
        model_name=model.name,
        schedule=None,
        extras={"acceptance_rate": float(rate), "proposal_std": float(std)},
    )


def grid_expectation(model, bounds, resolution: int, phi: TestFunctional) -> float:
    """Trapezoid-rule posterior expectation of phi for dim <= 2 targets.

    ``bounds`` gives (lo, hi) per dimension and must cover the posterior
    mass (6+ standard deviations); normalization cancels in the ratio
    integral(phi * p) / integral(p).
    """
    D = model.dim
    if D > 2:
        raise ValueError("grid quadrature supports dimension <= 2 only")
    bounds = [tuple(map(float, b)) for b in np.atleast_2d(bounds)]
    if len(bounds) != D:
        raise ValueError("need one (lo, hi) pair per dimension")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]

    def trap_weights(n, h):
        w = np.full(n, h)
        w[0] = w[-1] = 0.5 * h
        return w

    if D == 1:
        pts = axes[0][:, None]
        W = trap_weights(resolution, axes[0][1] - axes[0][0])
    else:
        g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
        pts = np.column_stack([g0.ravel(), g1.ravel()])
        w0 = trap_weights(resolution, axes[0][1] - axes[0][0])
        w1 = trap_weights(resolution, axes[1][1] - axes[1][0])
        W = np.outer(w0, w1).ravel()

    logp = np.asarray(model.log_posterior_batch(pts))
    if np.any(np.isnan(logp)) or np.any(logp == np.inf):
        raise ValueError("non-finite log density on the grid")
    p = np.exp(logp - logp.max())
    vals = np.array([phi.eval(pt) for pt in pts])
    denom = float(np.sum(W * p))
    if denom <= 0:
        raise ValueError("grid carries no posterior mass; widen the bounds")
    return float(np.sum(W * p * vals) / denom)
