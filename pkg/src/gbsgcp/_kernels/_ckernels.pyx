# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for grouped-count weights and PNR count sampling."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, lgamma, log, atan2, cos, sin, hypot, isfinite

cnp.import_array()

DEF MAX_DIM = 16
# re-anchor the ratio recurrence on the log-domain form this often
DEF ANCHOR_EVERY = 16
DEF TINY = 1e-280


cdef inline void _anchor(double nr, double ni, double logabs, double arg,
                         long m, double lgm, double *wr, double *wi) nogil:
    # exp(m log n - n - lgamma(m + 1)) on the principal branch
    cdef double mag = m * logabs - nr - lgm
    cdef double ph = m * arg - ni
    cdef double e = exp(mag)
    wr[0] = e * cos(ph)
    wi[0] = e * sin(ph)


cdef void _weights(double nr, double ni, long m_lo, long nb,
                   const double *lgam, double *wr, double *wi) nogil:
    cdef long k, m
    cdef double logabs, arg, tr, ti, inv
    if nr == 0.0 and ni == 0.0:
        for k in range(nb):
            m = m_lo + k
            wr[k] = 1.0 if m == 0 else 0.0
            wi[k] = 0.0
        return
    logabs = log(hypot(nr, ni))
    arg = atan2(ni, nr)
    for k in range(nb):
        m = m_lo + k
        if k % ANCHOR_EVERY == 0:
            _anchor(nr, ni, logabs, arg, m, lgam[k], &wr[k], &wi[k])
            continue
        tr = wr[k - 1]
        ti = wi[k - 1]
        if (tr < TINY and tr > -TINY) and (ti < TINY and ti > -TINY):
            _anchor(nr, ni, logabs, arg, m, lgam[k], &wr[k], &wi[k])
            continue
        inv = 1.0 / m
        wr[k] = (tr * nr - ti * ni) * inv
        wi[k] = (tr * ni + ti * nr) * inv


def grouped_weights(const double complex[:] n, long m_min, long m_max):
    """Complex per-sample weights n^m e^-n / m! for m in [m_min, m_max]."""
    cdef Py_ssize_t rows = n.shape[0], s
    cdef long nb = m_max - m_min + 1, k
    out_r = np.empty((rows, nb), dtype=np.float64)
    out_i = np.empty((rows, nb), dtype=np.float64)
    cdef double[:, ::1] wr = out_r
    cdef double[:, ::1] wi = out_i
    cdef double[::1] lgam = np.array([lgamma(m_min + k + 1.0) for k in range(nb)])
    with nogil:
        for s in range(rows):
            _weights(n[s].real, n[s].imag, m_min, nb, &lgam[0], &wr[s, 0], &wi[s, 0])
    return out_r + 1j * out_i


def gcp_sums(const double complex[:, :] n_sub, long[:] m_min, long[:] m_max,
             Py_ssize_t n_traj, Py_ssize_t n_samples):
    """Per-trajectory sums over samples of Re prod_j w_j(m_j).

    ``n_sub`` holds the grouped phase-space photon numbers, shape
    (n_traj * n_samples, d). Returns shape (n_traj, prod_j B_j), C-ordered
    over the bin axes.
    """
    cdef Py_ssize_t d = n_sub.shape[1]
    if d < 1 or d > MAX_DIM:
        raise ValueError(f"dimension {d} outside 1..{MAX_DIM}")
    if n_sub.shape[0] != n_traj * n_samples:
        raise ValueError("row count does not match n_traj * n_samples")
    cdef long nb[MAX_DIM]
    cdef long off[MAX_DIM]
    cdef long total = 1, bmax = 0, acc_off = 0
    cdef Py_ssize_t j
    for j in range(d):
        nb[j] = m_max[j] - m_min[j] + 1
        if nb[j] < 1:
            raise ValueError("empty count window")
        off[j] = acc_off
        acc_off += nb[j]
        total *= nb[j]
        if nb[j] > bmax:
            bmax = nb[j]
    lg_np = np.empty(acc_off, dtype=np.float64)
    cdef long k
    for j in range(d):
        for k in range(nb[j]):
            lg_np[off[j] + k] = lgamma(m_min[j] + k + 1.0)
    cdef double[::1] lgam = lg_np
    out_np = np.zeros((n_traj, total), dtype=np.float64)
    cdef double[:, ::1] out = out_np
    wr_np = np.empty(acc_off, dtype=np.float64)
    wi_np = np.empty(acc_off, dtype=np.float64)
    cdef double[::1] wr = wr_np
    cdef double[::1] wi = wi_np
    # prefix products for the odometer over bins
    pr_np = np.empty(MAX_DIM + 1, dtype=np.float64)
    pi_np = np.empty(MAX_DIM + 1, dtype=np.float64)
    cdef double[::1] pr = pr_np
    cdef double[::1] pi = pi_np
    cdef long idx[MAX_DIM]
    cdef Py_ssize_t t, s, row
    cdef long flat, i1, i2, b1, b2
    cdef double ar, ai, xr, xi
    cdef int level
    with nogil:
        for t in range(n_traj):
            for s in range(n_samples):
                row = t * n_samples + s
                for j in range(d):
                    _weights(n_sub[row, j].real, n_sub[row, j].imag, m_min[j], nb[j],
                             &lgam[off[j]], &wr[off[j]], &wi[off[j]])
                if d == 1:
                    for k in range(nb[0]):
                        out[t, k] += wr[k]
                elif d == 2:
                    b1 = nb[0]
                    b2 = nb[1]
                    for i1 in range(b1):
                        ar = wr[i1]
                        ai = wi[i1]
                        flat = i1 * b2
                        for i2 in range(b2):
                            out[t, flat + i2] += ar * wr[b1 + i2] - ai * wi[b1 + i2]
                else:
                    pr[0] = 1.0
                    pi[0] = 0.0
                    for j in range(d):
                        idx[j] = 0
                    level = 0
                    flat = 0
                    while True:
                        # descend, filling prefix products up to the last axis
                        while level < d:
                            xr = wr[off[level] + idx[level]]
                            xi = wi[off[level] + idx[level]]
                            pr[level + 1] = pr[level] * xr - pi[level] * xi
                            pi[level + 1] = pr[level] * xi + pi[level] * xr
                            level += 1
                        out[t, flat] += pr[d]
                        flat += 1
                        level = d - 1
                        while level >= 0:
                            idx[level] += 1
                            if idx[level] < nb[level]:
                                break
                            idx[level] = 0
                            level -= 1
                        if level < 0:
                            break
    return out_np


def poisson_counts(const double[:, :] intensity, const double[:, :] uniforms,
                   long c_max, bint renormalize):
    """Inverse-CDF draw of one PNR count per (sample, mode).

    Weights are p(c) = x^c e^-x / c! for c = 0..c_max. With ``renormalize``
    the truncated weights are rescaled to unit mass; otherwise the missing
    tail is assigned to c_max (detector saturation).
    """
    cdef Py_ssize_t rows = intensity.shape[0], cols = intensity.shape[1]
    if uniforms.shape[0] != rows or uniforms.shape[1] != cols:
        raise ValueError("uniforms must match intensity shape")
    out_np = np.empty((rows, cols), dtype=np.int64)
    cdef long[:, ::1] out = out_np
    cdef Py_ssize_t s, j
    cdef long c
    cdef double x, p, cdf, total, target
    with nogil:
        for s in range(rows):
            for j in range(cols):
                x = intensity[s, j]
                if x <= 0.0:
                    out[s, j] = 0
                    continue
                target = uniforms[s, j]
                if renormalize:
                    p = exp(-x)
                    total = p
                    for c in range(1, c_max + 1):
                        p = p * x / c
                        total = total + p
                    target = target * total
                p = exp(-x)
                cdf = p
                c = 0
                while c < c_max and not (target < cdf):
                    c += 1
                    p = p * x / c
                    cdf = cdf + p
                out[s, j] = c
    return out_np
