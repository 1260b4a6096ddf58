"""Pure-python chain kernels (numpy), the fallback backend.

Each function advances one block of iterations and mirrors, operation for
operation, the compiled kernels in ``_chains.pyx``: same update formulas,
same association order, same candidate-then-commit divergence handling.
On the Gaussian target every operation is elementwise, so the two
backends produce bit-identical chains; the logistic kernels involve
exp/log and row reductions whose last-ulp rounding may differ between
numpy and libm.

Algorithm codes: 0 = SGD, 1 = SGLD, 2 = pSGLD, 3 = RMSprop (ascent,
no noise).
"""

from __future__ import annotations

import numpy as np

from ..models import log_sigmoid, sigmoid

ALG_SGD, ALG_SGLD, ALG_PSGLD, ALG_RMSPROP = 0, 1, 2, 3


def _advance(theta, V, eps, zrow, pg, g, h, N, alg, alpha, lam, gamma_on):
    """One update from gradient pieces; returns candidate or None if non-finite."""
    if alg == ALG_SGD:
        cand = theta + eps * (pg + N * g)
    elif alg == ALG_SGLD:
        cand = theta + (0.5 * eps) * (pg + N * g) + np.sqrt(eps) * zrow
    else:
        V[:] = alpha * V + (1.0 - alpha) * (g * g)
        G = 1.0 / (lam + np.sqrt(V))
        drift = G * (pg + N * g)
        if gamma_on:
            gamma = np.zeros_like(V)
            pos = V > 0
            sv = np.sqrt(V[pos])
            s = lam + sv
            gamma[pos] = -((1.0 - alpha) * g[pos] * h[pos]) / (sv * (s * s))
            drift = drift + gamma
        if alg == ALG_PSGLD:
            cand = theta + (0.5 * eps) * drift + np.sqrt(eps * G) * zrow
        else:
            cand = theta + eps * drift
    if not np.all(np.isfinite(cand)):
        return None
    return cand


def gaussian_chain_block(
    theta, V, mu, cov_diag, eps_blk, Z, alg, alpha, lam, gamma_on,
    rec_off, out, out_row0,
):
    """Advance a chain on a diagonal Gaussian target; -1 on success,
    else the in-block offset of the first diverging step."""
    n_rec = rec_off.shape[0]
    ri = 0
    pg = np.zeros_like(theta)
    h = -1.0 / cov_diag
    for j in range(eps_blk.shape[0]):
        g = -(theta - mu) / cov_diag
        zrow = Z[j] if Z.shape[0] else None
        cand = _advance(theta, V, eps_blk[j], zrow, pg, g, h, 1.0, alg, alpha, lam, gamma_on)
        if cand is None:
            return j
        theta[:] = cand
        if ri < n_rec and rec_off[ri] == j:
            out[out_row0 + ri] = theta
            ri += 1
    return -1


def blr_chain_block(
    theta, V, X, y, prior_var, N, batches, eps_blk, Z, alg, alpha, lam,
    gamma_on, rec_off, out, out_row0,
):
    """Advance a logistic-regression chain over one block of minibatches."""
    n_rec = rec_off.shape[0]
    ri = 0
    nb = batches.shape[0]
    n = batches.shape[1]
    for j in range(eps_blk.shape[0]):
        idx = batches[j] if nb > 1 else batches[0]
        Xb = X[idx]
        yb = y[idx]
        z = Xb @ theta
        w = sigmoid(-yb * z) * yb
        g = (Xb.T @ w) / n
        if gamma_on:
            s2 = sigmoid(z) * sigmoid(-z)
            h = -((Xb * Xb).T @ s2) / n
        else:
            h = None
        pg = -theta / prior_var
        zrow = Z[j] if Z.shape[0] else None
        cand = _advance(theta, V, eps_blk[j], zrow, pg, g, h, float(N), alg, alpha, lam, gamma_on)
        if cand is None:
            return j
        theta[:] = cand
        if ri < n_rec and rec_off[ri] == j:
            out[out_row0 + ri] = theta
            ri += 1
    return -1


def _mh_block(logpost, theta, logp, std, Z, U, out, consec_in):
    acc = 0
    consec = consec_in
    max_run = consec_in
    logU = np.log(U)
    for j in range(Z.shape[0]):
        cand = theta + std * Z[j]
        lp_c = logpost(cand)
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


def mh_gaussian_block(theta, logp, mu, cov_diag, std, Z, U, out, consec_in):
    """Random-walk Metropolis block on the diagonal Gaussian target."""

    def logpost(t):
        d = t - mu
        return -0.5 * np.sum(d * d / cov_diag)

    return _mh_block(logpost, theta, logp, std, Z, U, out, consec_in)


def mh_blr_block(theta, logp, X, y, prior_var, std, Z, U, out, consec_in):
    """Random-walk Metropolis block on the logistic-regression posterior."""

    def logpost(t):
        z = X @ t
        return np.sum(log_sigmoid(y * z)) - 0.5 * np.dot(t, t) / prior_var

    return _mh_block(logpost, theta, logp, std, Z, U, out, consec_in)
