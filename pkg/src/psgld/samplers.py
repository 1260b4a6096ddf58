"""Update rules, step-size schedules and the chain driver.

Four algorithms share one driver: stochastic gradient ascent, its
Langevin-noise variant, the preconditioned Langevin sampler (with or
without the curvature-correction term of the preconditioner), and the
noise-free preconditioned ascent baseline.  Per iteration the driver
estimates the minibatch gradient, updates the second-moment state, forms
the diagonal preconditioner, then takes the step; see ``psgld_step`` for
the update written out.

Reproducibility contract: a chain is a pure function of (model, config).
Randomness comes from one counter-based Philox generator per stream,
split from the config seed as SeedSequence(seed).spawn(3) ->
(init, noise, batch).  Gaussian noise is drawn through numpy's
``standard_normal`` in fixed blocks of ``NOISE_BLOCK`` iterations and
minibatches come from per-epoch shuffled permutations (batches that do
not fill ``minibatch_size`` at the epoch boundary are dropped), so reruns
with the same seed are bit-identical within one build.  The noise and
batch streams are separate, which also makes algorithms comparable under
matched seeds: they see the same minibatch sequence.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import kernels
from .model_api import GradientEstimate, TargetModel

NOISE_BLOCK = 4096

_ALG_CODES = {"sgd": 0, "sgld": 1, "psgld": 2, "rmsprop": 3}
_NOISY = {"sgld", "psgld"}


class DivergenceError(RuntimeError):
    """A chain produced a non-finite parameter entry."""

    def __init__(self, iteration, theta_norm):
        self.iteration = iteration
        self.theta_norm = theta_norm
        super().__init__(
            f"non-finite parameter at iteration {iteration} "
            f"(last finite |theta| = {theta_norm:.6g})"
        )


class Assumption1Warning(UserWarning):
    """Schedule does not satisfy the decreasing/summability conditions."""


# ---------------------------------------------------------------------------
# step-size schedules


@dataclass(frozen=True)
class PolynomialSchedule:
    """eps_t = a * (b + t)^(-gamma); satisfies the step-size assumption
    (decreasing, divergent sum, convergent sum of squares) for
    gamma in (0.5, 1]."""

    a: float
    b: float
    gamma: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be positive")
        if not self.b >= 0:
            raise ValueError("b must be nonnegative")
        if not 0.5 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0.5, 1]")

    def step_size(self, t):
        return self.a * (self.b + t) ** (-self.gamma)

    compliant = True
    kind = "polynomial"


@dataclass(frozen=True)
class BlockDecaySchedule:
    """Halves eps0 after every L_epochs epochs of epoch_len iterations.

    Matches common deep-net practice but violates the step-size
    assumption (the sum of steps converges), so the validator flags it.
    """

    eps0: float
    L_epochs: int
    epoch_len: int

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if self.L_epochs < 1 or self.epoch_len < 1:
            raise ValueError("L_epochs and epoch_len must be >= 1")

    def step_size(self, t):
        return self.eps0 * 2.0 ** (-((t - 1) // (self.L_epochs * self.epoch_len)))

    compliant = False
    kind = "block_decay"


@dataclass(frozen=True)
class ConstantSchedule:
    """Fixed step size, for experiment parity; not assumption-compliant."""

    eps0: float

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ValueError("eps0 must be positive")

    def step_size(self, t):
        return self.eps0

    compliant = False
    kind = "constant"


def step_size(schedule, t: int) -> float:
    """Step size at iteration t >= 1."""
    if t < 1:
        raise ValueError("iterations are 1-based")
    return float(schedule.step_size(t))


def eps_array(schedule, total_iters: int) -> np.ndarray:
    t = np.arange(1, total_iters + 1, dtype=np.float64)
    if isinstance(schedule, PolynomialSchedule):
        return schedule.a * (schedule.b + t) ** (-schedule.gamma)
    if isinstance(schedule, BlockDecaySchedule):
        k = (np.arange(total_iters) // (schedule.L_epochs * schedule.epoch_len))
        return schedule.eps0 * 2.0 ** (-k.astype(np.float64))
    if isinstance(schedule, ConstantSchedule):
        return np.full(total_iters, schedule.eps0)
    return np.array([schedule.step_size(int(i)) for i in t])


def assumption1_compliant(schedule) -> bool:
    """True when the schedule meets the decreasing/summability conditions."""
    return bool(getattr(schedule, "compliant", False))


def schedule_to_dict(schedule) -> dict:
    d = {"kind": schedule.kind}
    for f in fields(schedule):
        d[f.name] = getattr(schedule, f.name)
    return d


def schedule_from_dict(d: dict):
    kinds = {
        "polynomial": PolynomialSchedule,
        "block_decay": BlockDecaySchedule,
        "constant": ConstantSchedule,
    }
    d = dict(d)
    cls = kinds[d.pop("kind")]
    return cls(**d)


# ---------------------------------------------------------------------------
# single-step update rules


@dataclass
class PreconditionerState:
    """Running second-moment estimate and its hyperparameters.

    ``V`` is a convex combination of past squared mean gradients, so its
    entries stay in [0, max over history of g_bar_i^2].
    """

    V: np.ndarray
    alpha: float = 0.99
    lam: float = 1e-5

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=np.float64)
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if np.any(self.V < 0):
            raise ValueError("V entries must be nonnegative")


def _noise(shape, noise, rng):
    if noise is not None:
        return np.asarray(noise, dtype=np.float64)
    if rng is None:
        raise ValueError("provide either an injected noise vector or an rng")
    return rng.standard_normal(shape)


def sgd_step(theta, prior_grad, grad: GradientEstimate, eps: float) -> np.ndarray:
    """theta + eps * (prior_grad + N * g_bar)."""
    return theta + eps * (prior_grad + grad.N * grad.g_bar)


def sgld_step(theta, prior_grad, grad: GradientEstimate, eps: float,
              noise=None, rng=None) -> np.ndarray:
    """theta + (eps/2) * (prior_grad + N * g_bar) + sqrt(eps) * z.

    ``noise`` injects the standard-normal vector z directly (test hook);
    otherwise z is drawn from ``rng``.
    """
    z = _noise(np.shape(theta), noise, rng)
    return theta + (0.5 * eps) * (prior_grad + grad.N * grad.g_bar) + np.sqrt(eps) * z


def precond_update(state: PreconditionerState, grad: GradientEstimate):
    """Second-moment recursion and the diagonal preconditioner it implies.

    V' = alpha * V + (1 - alpha) * g_bar**2, elementwise;
    G  = 1 / (lambda + sqrt(V')).  Returns (V', G) without mutating state.
    """
    g = grad.g_bar
    V = state.alpha * state.V + (1.0 - state.alpha) * (g * g)
    G = 1.0 / (state.lam + np.sqrt(V))
    return V, G


def gamma_term(state: PreconditionerState, grad: GradientEstimate,
               diag_hess: np.ndarray) -> np.ndarray:
    """Divergence of the diagonal preconditioner w.r.t. theta.

    With G_i = 1/(lambda + sqrt(V_i)) and only the current squared
    gradient treated as theta-dependent (the recursion's dependence
    structure; the history term is a constant at this iteration),

        Gamma_i = -(1 - alpha) * g_i * h_i
                  / ( sqrt(V_i) * (lambda + sqrt(V_i))^2 )

    where h_i is the diagonal Hessian of the mean minibatch
    log-likelihood.  ``state.V`` must hold the already-updated V of this
    iteration.  Entries with V_i = 0 (possible only when every historical
    gradient was zero there) return 0, the limit of the formula.
    """
    V = state.V
    g = grad.g_bar
    h = np.asarray(diag_hess, dtype=np.float64)
    gamma = np.zeros_like(V)
    pos = V > 0
    sv = np.sqrt(V[pos])
    s = state.lam + sv
    gamma[pos] = -((1.0 - state.alpha) * g[pos] * h[pos]) / (sv * (s * s))
    return gamma


def psgld_step(theta, prior_grad, grad: GradientEstimate, g_diag, eps: float,
               gamma=None, noise=None, rng=None) -> np.ndarray:
    """Preconditioned Langevin update.

    theta + (eps/2) * (G * (prior_grad + N * g_bar) + Gamma)
          + sqrt(eps * G) * z,   z standard normal.

    ``g_diag`` must be the preconditioner freshly computed for this
    iteration (second-moment update first, then G, then the step).
    ``gamma=None`` runs the correction-free variant.
    """
    z = _noise(np.shape(theta), noise, rng)
    drift = g_diag * (prior_grad + grad.N * grad.g_bar)
    if gamma is not None:
        drift = drift + gamma
    return theta + (0.5 * eps) * drift + np.sqrt(eps * g_diag) * z


def rmsprop_step(theta, prior_grad, grad: GradientEstimate, g_diag,
                 eps: float) -> np.ndarray:
    """Noise-free preconditioned ascent: theta + eps * G * (prior_grad + N * g_bar).

    No half-step factor, no bias correction, no momentum; with G = 1 this
    reduces to ``sgd_step``.
    """
    return theta + eps * (g_diag * (prior_grad + grad.N * grad.g_bar))


# ---------------------------------------------------------------------------
# chain configuration and output


@dataclass
class SamplerConfig:
    """Everything a chain run depends on besides the model."""

    algorithm: str
    schedule: object
    total_iters: int
    burn_in: int = 0
    thinning: int = 1
    minibatch_size: int = 1
    seed: int = 0
    gamma_term: bool = False
    alpha: float = 0.99
    lam: float = 1e-5

    def validate(self, model: TargetModel):
        if self.algorithm not in _ALG_CODES:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.total_iters < 1:
            raise ValueError("total_iters must be >= 1")
        if not 0 <= self.burn_in < self.total_iters:
            raise ValueError("need 0 <= burn_in < total_iters")
        if not 1 <= self.thinning <= self.total_iters - self.burn_in:
            raise ValueError("need 1 <= thinning <= total_iters - burn_in")
        if self.gamma_term and self.algorithm != "psgld":
            raise ValueError("gamma_term applies to the psgld algorithm only")
        if self.gamma_term and not model.supports_diag_hessian:
            raise ValueError(
                f"model {model.name!r} does not support the Gamma term; "
                "run with gamma_term=False"
            )
        if model.has_dataset:
            if not 1 <= self.minibatch_size <= model.dataset_size:
                raise ValueError("minibatch_size must lie in [1, N]")
        elif self.minibatch_size != 1:
            raise ValueError("direct targets take minibatch_size = 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


@dataclass
class SampleTrace:
    """Recorded (thinned, post-burn-in) samples plus run provenance.

    ``S_T`` sums every post-burn-in step size, recorded or not; ``eps``
    holds the step size at each recorded iteration.
    """

    samples: np.ndarray
    eps: np.ndarray
    S_T: float
    total_iters: int
    burn_in: int
    thinning: int
    seed: int
    algorithm: str
    model_name: str = "target"
    schedule: Optional[dict] = None
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]


def record_iterations(total_iters: int, burn_in: int, thinning: int) -> np.ndarray:
    """1-based iterations whose post-step state is recorded."""
    first = burn_in + thinning
    return np.arange(first, total_iters + 1, thinning, dtype=np.int64)


# ---------------------------------------------------------------------------
# chain driver


class _BatchStream:
    """Without-replacement minibatches from per-epoch shuffled permutations."""

    def __init__(self, rng, N, n):
        self.rng = rng
        self.N = N
        self.n = n
        self.per_epoch = N // n
        self._perm = None
        self._k = 0
        self._full = (
            np.arange(N, dtype=np.int64)[None, :] if n == N else None
        )

    def next_block(self, B):
        if self._full is not None:
            return self._full  # one shared row; no randomness consumed
        out = np.empty((B, self.n), dtype=np.int64)
        for j in range(B):
            if self._perm is None or self._k >= self.per_epoch:
                self._perm = self.rng.permutation(self.N)
                self._k = 0
            out[j] = self._perm[self._k * self.n : (self._k + 1) * self.n]
            self._k += 1
        return out


def _chain_rngs(seed):
    init_ss, noise_ss, batch_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.Generator(np.random.Philox(init_ss)),
        np.random.Generator(np.random.Philox(noise_ss)),
        np.random.Generator(np.random.Philox(batch_ss)),
    )


def _generic_block(model, theta, V, eps_blk, Z, batches, alg, alpha, lam,
                   gamma_on, rec_off, out, out_row0):
    """Model-method twin of the kernel block functions (used for models
    without a kernel payload, and as the parity reference in tests)."""
    n_rec = rec_off.shape[0]
    ri = 0
    nb = batches.shape[0] if batches is not None else 0
    state = PreconditionerState(V=V, alpha=alpha, lam=lam)
    for j in range(eps_blk.shape[0]):
        eps = eps_blk[j]
        if model.has_dataset:
            idx = batches[j] if nb > 1 else batches[0]
            grad = model.minibatch_grad(theta, idx)
        else:
            idx = None
            grad = model.minibatch_grad(theta)
        pg = model.log_prior_grad(theta)
        if alg == "sgd":
            cand = sgd_step(theta, pg, grad, eps)
        elif alg == "sgld":
            cand = sgld_step(theta, pg, grad, eps, noise=Z[j])
        else:
            V[:], G = precond_update(state, grad)
            gamma = None
            if gamma_on:
                h = model.diag_hessian(theta, idx)
                gamma = gamma_term(state, grad, h)
            if alg == "psgld":
                cand = psgld_step(theta, pg, grad, G, eps, gamma=gamma, noise=Z[j])
            else:
                cand = rmsprop_step(theta, pg, grad, G, eps)
        if not np.all(np.isfinite(cand)):
            return j
        theta[:] = cand
        if ri < n_rec and rec_off[ri] == j:
            out[out_row0 + ri] = theta
            ri += 1
    return -1


def run_chain(model: TargetModel, config: SamplerConfig, backend=None) -> SampleTrace:
    """Run one chain and return its recorded trace.

    ``backend`` selects the block executor: None/"auto" uses the compiled
    kernels when the model provides a payload, "python" forces the numpy
    kernel twin, "compiled" requires the extension, and "generic" runs
    the model-method reference path (always used for models without a
    kernel payload, e.g. the feedforward network).
    """
    config.validate(model)
    if not assumption1_compliant(config.schedule):
        warnings.warn(
            f"schedule {getattr(config.schedule, 'kind', '?')!r} does not satisfy "
            "the decreasing-step-size conditions; the chain is not "
            "asymptotically consistent",
            Assumption1Warning,
            stacklevel=2,
        )

    D = model.dim
    T = config.total_iters
    alg = config.algorithm
    alg_code = _ALG_CODES[alg]
    eps = eps_array(config.schedule, T)

    init_rng, noise_rng, batch_rng = _chain_rngs(config.seed)
    theta = np.array(model.init_params(init_rng), dtype=np.float64)
    V = np.zeros(D)

    payload = None if backend == "generic" else model.kernel_payload()
    impl = kernels.get_backend(backend) if payload is not None else None

    rec_iters = record_iterations(T, config.burn_in, config.thinning)
    out = np.empty((rec_iters.size, D))
    batch_stream = (
        _BatchStream(batch_rng, model.dataset_size, config.minibatch_size)
        if model.has_dataset
        else None
    )
    noisy = alg in _NOISY
    empty_Z = np.empty((0, D))

    t0 = 0
    rec_pos = 0
    while t0 < T:
        B = min(NOISE_BLOCK, T - t0)
        Z = noise_rng.standard_normal((B, D)) if noisy else empty_Z
        batches = batch_stream.next_block(B) if batch_stream is not None else None
        lo, hi = np.searchsorted(rec_iters, [t0 + 1, t0 + B + 1])
        rec_off = rec_iters[lo:hi] - t0 - 1

        if payload is None:
            status = _generic_block(
                model, theta, V, eps[t0 : t0 + B], Z, batches, alg,
                config.alpha, config.lam, config.gamma_term, rec_off, out, lo,
            )
        elif payload["kind"] == "gaussian":
            status = impl.gaussian_chain_block(
                theta, V, payload["mu"], payload["cov_diag"],
                eps[t0 : t0 + B], Z, alg_code, config.alpha, config.lam,
                config.gamma_term, rec_off, out, lo,
            )
        elif payload["kind"] == "blr":
            status = impl.blr_chain_block(
                theta, V, payload["X"], payload["y"],
                1.0 / payload["inv_prior_var"], float(model.dataset_size),
                batches, eps[t0 : t0 + B], Z, alg_code, config.alpha,
                config.lam, config.gamma_term, rec_off, out, lo,
            )
        else:
            raise ValueError(f"unknown kernel payload kind {payload['kind']!r}")

        if status >= 0:
            # scaled norm stays finite even when entries are near overflow
            m = float(np.max(np.abs(theta)))
            norm = m * float(np.linalg.norm(theta / m)) if m > 0 else 0.0
            raise DivergenceError(t0 + status + 1, norm)
        rec_pos = hi
        t0 += B

    assert rec_pos == rec_iters.size
    return SampleTrace(
        samples=out,
        eps=eps[rec_iters - 1].copy(),
        S_T=float(np.sum(eps[config.burn_in :])),
        total_iters=T,
        burn_in=config.burn_in,
        thinning=config.thinning,
        seed=config.seed,
        algorithm=alg,
        model_name=model.name,
        schedule=schedule_to_dict(config.schedule),
        extras={
            "gamma_term": config.gamma_term,
            "alpha": config.alpha,
            "lam": config.lam,
            "minibatch_size": config.minibatch_size,
        },
    )
