"""Pure NumPy versions of the compiled kernels (same signatures)."""

import numpy as np
from scipy.special import gammaln


def grouped_weights(n, m_min, m_max):
    """Complex per-sample weights n^m e^-n / m! for m in [m_min, m_max]."""
    n = np.asarray(n, dtype=np.complex128)
    m = np.arange(m_min, m_max + 1)
    zero = n == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        logn = np.log(np.where(zero, 1.0, n))
        w = np.exp(m[None, :] * logn[:, None] - n[:, None] - gammaln(m + 1.0)[None, :])
    if zero.any():
        w[zero] = (m == 0).astype(np.complex128)
    return w


def gcp_sums(n_sub, m_min, m_max, n_traj, n_samples):
    """Per-trajectory sums over samples of Re prod_j w_j(m_j)."""
    n_sub = np.asarray(n_sub, dtype=np.complex128)
    rows, d = n_sub.shape
    if rows != n_traj * n_samples:
        raise ValueError("row count does not match n_traj * n_samples")
    ws = [grouped_weights(n_sub[:, j], int(m_min[j]), int(m_max[j])) for j in range(d)]
    ws = [w.reshape(n_traj, n_samples, -1) for w in ws]
    if d == 1:
        return ws[0].real.sum(axis=1)
    if d == 2:
        # Re sum(w1 w2) = Re of a complex batched product
        return np.einsum("tsi,tsj->tij", ws[0], ws[1]).real.reshape(n_traj, -1)
    acc = ws[0]
    for w in ws[1:]:
        acc = (acc[..., :, None] * w[:, :, None, :]).reshape(n_traj, n_samples, -1)
    return acc.real.sum(axis=1)


def poisson_counts(intensity, uniforms, c_max, renormalize):
    """Inverse-CDF draw of one PNR count per (sample, mode)."""
    x = np.asarray(intensity, dtype=np.float64)
    u = np.asarray(uniforms, dtype=np.float64)
    if u.shape != x.shape:
        raise ValueError("uniforms must match intensity shape")
    target = u
    if renormalize:
        p = np.exp(-x)
        total = p.copy()
        for c in range(1, c_max + 1):
            p = p * x / c
            total = total + p
        target = u * total
    p = np.exp(-x)
    cdf = p.copy()
    counts = np.zeros(x.shape, dtype=np.int64)
    for c in range(1, c_max + 1):
        counts += ~(target < cdf)
        p = p * x / c
        cdf = cdf + p
    counts[x <= 0.0] = 0
    return counts
