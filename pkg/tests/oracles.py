"""Independent reference calculations used only by the tests.

Neither oracle shares code with the package: the Fock-basis oracle works with
photon-number distributions of single squeezed modes, and the generating
function oracle works with the Gaussian state's normally ordered covariance.
"""

import math

import numpy as np
from scipy.special import gammaln


def squeezed_vacuum_counts(r: float, cutoff: int) -> np.ndarray:
    """Photon-number distribution of one squeezed vacuum, P(2k) = (2k)!/(4^k k!^2) tanh^2k r / cosh r."""
    p = np.zeros(cutoff + 1)
    th = math.tanh(r)
    for k in range(cutoff // 2 + 1):
        logc = gammaln(2 * k + 1) - 2 * k * math.log(2) - 2 * gammaln(k + 1)
        p[2 * k] = math.exp(logc) * th ** (2 * k) / math.cosh(r)
    return p


def binomial_loss(p: np.ndarray, eta: float) -> np.ndarray:
    """Photon-number distribution after a beam splitter of intensity transmission eta."""
    n = p.size
    out = np.zeros(n)
    for m in range(n):
        if p[m] == 0:
            continue
        j = np.arange(m + 1)
        if eta in (0.0, 1.0):
            out[m if eta == 1.0 else 0] += p[m]
            continue
        logb = gammaln(m + 1) - gammaln(j + 1) - gammaln(m - j + 1)
        out[: m + 1] += p[m] * np.exp(logb + j * math.log(eta) + (m - j) * math.log1p(-eta))
    return out


def fock_total_counts(M: int, r: float, t: float, cutoff: int = 40, mode_cutoff: int = 160) -> np.ndarray:
    """Total counts of M equal squeezed vacua, uniform loss t (amplitude), any unitary.

    The total count commutes with the unitary, and uniform loss commutes with
    it too, so the result is the M-fold convolution of one lossy mode.
    """
    one = binomial_loss(squeezed_vacuum_counts(r, mode_cutoff), t * t)
    tot = np.zeros(mode_cutoff + 1)
    tot[0] = 1.0
    for _ in range(M):
        tot = np.convolve(tot, one)[: mode_cutoff + 1]
    return tot[: cutoff + 1]


def _normal_covariance(r, eps, T):
    """Normally ordered moment matrix of x = (alpha', beta'^*) for squeezed inputs through T."""
    r = np.asarray(r, float)
    T = np.asarray(T, complex)[:, : r.size]
    n = np.sinh(r) ** 2
    m = (1 - eps) * np.sinh(r) * np.cosh(r)
    Mc = T @ np.diag(m) @ T.T
    N = T.conj() @ np.diag(n) @ T.T
    return np.block([[Mc, N.T], [N, Mc.conj()]])


def gcp_generating_function(r, eps, T, subsets, K=128) -> np.ndarray:
    """Grouped count probabilities P(m_1..m_d) for m_j < K from the Gaussian generating function.

    E[prod s_j^{m_j}] = det(I + C A)^(-1/2) with A = [[0, L], [L, 0]] and
    L = diag(1 - s_g(i)); coefficients come from an FFT on the unit circle.
    """
    C = _normal_covariance(r, eps, T)
    M = C.shape[0] // 2
    d = len(subsets)
    omega = np.exp(2j * np.pi * np.arange(K) / K)
    grid = np.meshgrid(*([omega] * d), indexing="ij")
    logdet = np.empty(grid[0].shape, complex)
    for idx in np.ndindex(*logdet.shape):
        lam = np.zeros(M, complex)
        for j, s in enumerate(subsets):
            lam[list(s)] = 1 - grid[j][idx]
        L = np.diag(lam)
        A = np.block([[np.zeros((M, M)), L], [L, np.zeros((M, M))]])
        sign, ld = np.linalg.slogdet(np.eye(2 * M) + C @ A)
        logdet[idx] = np.log(sign) + ld
    # make the log continuous so the square root stays on the branch with G(1) = 1
    im = logdet.imag
    im = np.unwrap(im, axis=0)
    if d > 1:
        ref = im[(slice(None),) + (0,) * (d - 1)]
        for ax in range(1, d):
            im = np.unwrap(im, axis=ax)
        shift = ref[(slice(None),) + (None,) * (d - 1)] - im[(slice(None),) + (slice(0, 1),) * (d - 1)]
        im = im + shift
    G = np.exp(-0.5 * (logdet.real + 1j * im))
    P = np.fft.fftn(G) / K**d  # coefficient of s^m is (1/K) sum_l G(w^l) w^(-lm)
    return P.real
