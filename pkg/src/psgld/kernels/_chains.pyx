# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled chain kernels.

Mirrors ``py_chains`` operation for operation; see that module for the
backend contract.  Keep the update formulas and their association order
in sync with the numpy fallback: on elementwise-only targets (the
Gaussian) the two backends must produce bit-identical chains, which is
asserted by the kernel parity tests.
"""

import numpy as np

from libc.math cimport exp, isfinite, log, log1p, sqrt
from libc.stdint cimport int64_t


cdef inline double _sig(double x) noexcept nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _logsig(double x) noexcept nogil:
    if x >= 0.0:
        return -log1p(exp(-x))
    return x - log1p(exp(x))


cdef inline bint _advance(
    double[::1] theta, double[::1] V, double[::1] cand,
    double eps, double[:, ::1] Z, Py_ssize_t zj,
    double[::1] pg, double[::1] g, double[::1] h,
    double N, int alg, double alpha, double lam, bint gamma_on,
) noexcept:
    cdef Py_ssize_t i, D = theta.shape[0]
    cdef double he = 0.5 * eps
    cdef double oma = 1.0 - alpha
    cdef double se, v, Gi, drift, gam, sv, s
    cdef bint ok = 1

    if alg == 0:  # SGD
        for i in range(D):
            cand[i] = theta[i] + eps * (pg[i] + N * g[i])
    elif alg == 1:  # SGLD
        se = sqrt(eps)
        for i in range(D):
            cand[i] = theta[i] + he * (pg[i] + N * g[i]) + se * Z[zj, i]
    else:  # pSGLD / RMSprop share the preconditioner recursion
        for i in range(D):
            v = alpha * V[i] + oma * (g[i] * g[i])
            V[i] = v
            Gi = 1.0 / (lam + sqrt(v))
            drift = Gi * (pg[i] + N * g[i])
            if gamma_on:
                if v > 0.0:
                    sv = sqrt(v)
                    s = lam + sv
                    gam = (-((oma * g[i]) * h[i])) / (sv * (s * s))
                else:
                    gam = 0.0
                drift = drift + gam
            if alg == 2:
                cand[i] = theta[i] + he * drift + sqrt(eps * Gi) * Z[zj, i]
            else:
                cand[i] = theta[i] + eps * drift

    for i in range(D):
        if not isfinite(cand[i]):
            ok = 0
            break
    if ok:
        for i in range(D):
            theta[i] = cand[i]
    return ok


def gaussian_chain_block(
    double[::1] theta, double[::1] V,
    const double[::1] mu, const double[::1] cov_diag,
    const double[::1] eps_blk, double[:, ::1] Z,
    int alg, double alpha, double lam, bint gamma_on,
    const int64_t[::1] rec_off, double[:, ::1] out, Py_ssize_t out_row0,
):
    cdef Py_ssize_t B = eps_blk.shape[0], D = theta.shape[0]
    cdef Py_ssize_t j, i, ri = 0, R = rec_off.shape[0]
    cdef double[::1] g = np.empty(D)
    cdef double[::1] pg = np.zeros(D)
    cdef double[::1] h = np.empty(D)
    cdef double[::1] cand = np.empty(D)

    for i in range(D):
        h[i] = -1.0 / cov_diag[i]
    for j in range(B):
        for i in range(D):
            g[i] = (-(theta[i] - mu[i])) / cov_diag[i]
        if not _advance(theta, V, cand, eps_blk[j], Z, j, pg, g, h,
                        1.0, alg, alpha, lam, gamma_on):
            return j
        if ri < R and rec_off[ri] == j:
            for i in range(D):
                out[out_row0 + ri, i] = theta[i]
            ri += 1
    return -1


def blr_chain_block(
    double[::1] theta, double[::1] V,
    const double[:, ::1] X, const double[::1] y,
    double prior_var, double N,
    const int64_t[:, ::1] batches,
    const double[::1] eps_blk, double[:, ::1] Z,
    int alg, double alpha, double lam, bint gamma_on,
    const int64_t[::1] rec_off, double[:, ::1] out, Py_ssize_t out_row0,
):
    cdef Py_ssize_t B = eps_blk.shape[0], D = theta.shape[0]
    cdef Py_ssize_t nb = batches.shape[0], n = batches.shape[1]
    cdef Py_ssize_t j, i, r, bi, row, ri = 0, R = rec_off.shape[0]
    cdef double nd = <double> n
    cdef double z, w, s2
    cdef double[::1] g = np.empty(D)
    cdef double[::1] h = np.empty(D)
    cdef double[::1] pg = np.empty(D)
    cdef double[::1] cand = np.empty(D)

    for j in range(B):
        bi = j if nb > 1 else 0
        for i in range(D):
            g[i] = 0.0
            h[i] = 0.0
        for r in range(n):
            row = batches[bi, r]
            z = 0.0
            for i in range(D):
                z += X[row, i] * theta[i]
            w = _sig(-(y[row] * z)) * y[row]
            for i in range(D):
                g[i] += X[row, i] * w
            if gamma_on:
                s2 = _sig(z) * _sig(-z)
                for i in range(D):
                    h[i] -= (X[row, i] * X[row, i]) * s2
        for i in range(D):
            g[i] = g[i] / nd
            h[i] = h[i] / nd
            pg[i] = (-theta[i]) / prior_var
        if not _advance(theta, V, cand, eps_blk[j], Z, j, pg, g, h,
                        N, alg, alpha, lam, gamma_on):
            return j
        if ri < R and rec_off[ri] == j:
            for i in range(D):
                out[out_row0 + ri, i] = theta[i]
            ri += 1
    return -1


def mh_gaussian_block(
    double[::1] theta, double[::1] logp,
    const double[::1] mu, const double[::1] cov_diag,
    double std, const double[:, ::1] Z, const double[::1] U,
    double[:, ::1] out, int64_t consec_in,
):
    cdef Py_ssize_t B = Z.shape[0], D = theta.shape[0]
    cdef Py_ssize_t j, i
    cdef int64_t acc = 0, consec = consec_in, max_run = consec_in
    cdef double lp_c, d
    cdef double[::1] cand = np.empty(D)

    for j in range(B):
        lp_c = 0.0
        for i in range(D):
            cand[i] = theta[i] + std * Z[j, i]
            d = cand[i] - mu[i]
            lp_c += (d * d) / cov_diag[i]
        lp_c = -0.5 * lp_c
        if log(U[j]) < lp_c - logp[0]:
            for i in range(D):
                theta[i] = cand[i]
            logp[0] = lp_c
            acc += 1
            consec = 0
        else:
            consec += 1
            if consec > max_run:
                max_run = consec
        for i in range(D):
            out[j, i] = theta[i]
    return acc, consec, max_run


def mh_blr_block(
    double[::1] theta, double[::1] logp,
    const double[:, ::1] X, const double[::1] y,
    double prior_var, double std,
    const double[:, ::1] Z, const double[::1] U,
    double[:, ::1] out, int64_t consec_in,
):
    cdef Py_ssize_t B = Z.shape[0], D = theta.shape[0], N = X.shape[0]
    cdef Py_ssize_t j, i, r
    cdef int64_t acc = 0, consec = consec_in, max_run = consec_in
    cdef double lp_c, z, quad
    cdef double[::1] cand = np.empty(D)

    for j in range(B):
        quad = 0.0
        for i in range(D):
            cand[i] = theta[i] + std * Z[j, i]
            quad += cand[i] * cand[i]
        lp_c = -0.5 * quad / prior_var
        for r in range(N):
            z = 0.0
            for i in range(D):
                z += X[r, i] * cand[i]
            lp_c += _logsig(y[r] * z)
        if log(U[j]) < lp_c - logp[0]:
            for i in range(D):
                theta[i] = cand[i]
            logp[0] = lp_c
            acc += 1
            consec = 0
        else:
            consec += 1
            if consec > max_run:
                max_run = consec
        for i in range(D):
            out[j, i] = theta[i]
    return acc, consec, max_run
