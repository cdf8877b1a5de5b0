"""Closed-form total-count distributions and the special functions behind them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

#: per-call term budget for hypergeometric series
TERM_BUDGET = 1_000_000
_EPS = 1e-17
_RESCALE = 1e200


class ConvergenceError(ArithmeticError):
    """A series did not converge within its term budget."""


def _nonpositive_int(x: float) -> bool:
    return x <= 0 and float(x).is_integer()


def _series_log(a, b, c, z):
    """log|sum_k (a)_k (b)_k / ((c)_k k!) z^k| and its sign.

    Terms follow the ratio recurrence; the running sum and term are rescaled
    to stay in range, so large parameters do not overflow.
    """
    term, total, log_scale = 1.0, 1.0, 0.0
    for k in range(TERM_BUDGET):
        ak, bk = a + k, b + k
        if ak == 0 or bk == 0:  # polynomial: the series terminates here
            break
        ratio = ak * bk / ((c + k) * (k + 1)) * z
        term *= ratio
        total += term
        if abs(total) > _RESCALE:
            term /= _RESCALE
            total /= _RESCALE
            log_scale += math.log(_RESCALE)
        if term == 0.0:
            break
        # once ratios settle below 1 the tail is dominated by a geometric series
        rho = max(abs(ratio), z)
        if rho < 1.0 and k > 0 and abs(term) * rho / (1.0 - rho) <= _EPS * abs(total):
            break
    else:
        raise ConvergenceError(f"2F1({a}, {b}; {c}; {z}) did not converge in {TERM_BUDGET} terms")
    if total == 0.0:
        return -math.inf, 0.0
    return log_scale + math.log(abs(total)), math.copysign(1.0, total)


def log_hyp2f1(a: float, b: float, c: float, z: float) -> tuple[float, float]:
    """``(log|2F1(a, b; c; z)|, sign)`` for 0 <= z < 1.

    For z > 0.5 the Euler transformation
    2F1(a, b; c; z) = (1 - z)^(c-a-b) 2F1(c-a, c-b; c; z)
    is applied when it turns the series into a finite polynomial.
    """
    a, b, c, z = float(a), float(b), float(c), float(z)
    if _nonpositive_int(c):
        raise ValueError(f"c={c} is a non-positive integer")
    if not 0.0 <= z < 1.0:
        raise ValueError(f"z={z} outside [0, 1)")
    if z == 0.0:
        return 0.0, 1.0
    if z > 0.5 and not (_nonpositive_int(a) or _nonpositive_int(b)):
        if _nonpositive_int(c - a) or _nonpositive_int(c - b):
            logf, sign = _series_log(c - a, c - b, c, z)
            return logf + (c - a - b) * math.log1p(-z), sign
    return _series_log(a, b, c, z)


def hyp2f1(a: float, b: float, c: float, z: float) -> float:
    """Gauss hypergeometric function 2F1(a, b; c; z) for real 0 <= z < 1."""
    logf, sign = log_hyp2f1(a, b, c, z)
    return sign * math.exp(logf)


@dataclass(frozen=True)
class ExactDistribution:
    """Probabilities over total counts 0..m_cut with a tail-mass bound."""

    probabilities: np.ndarray
    model: str
    params: dict = field(default_factory=dict)
    tail_bound: float = 0.0
    tail_rigorous: bool = True

    @property
    def m_cut(self) -> int:
        return self.probabilities.size - 1

    def total(self) -> float:
        return float(self.probabilities.sum())

    def mean(self) -> float:
        return float(np.dot(np.arange(self.probabilities.size), self.probabilities))

    def window(self, m_min: int, m_max: int) -> np.ndarray:
        """Probabilities on [m_min, m_max], zero beyond m_cut."""
        out = np.zeros(m_max - m_min + 1)
        hi = min(m_max, self.m_cut)
        if hi >= m_min:
            out[: hi - m_min + 1] = self.probabilities[m_min : hi + 1]
        return out

    def to_estimate(self, spec):
        """A d=1 :class:`GcpEstimate` on the spec's window with zero error bars."""
        from .gcp import GcpEstimate

        if spec.d != 1:
            raise ValueError("exact distributions are one-dimensional")
        lo, hi = spec.windows[0]
        p = self.window(lo, hi)
        return GcpEstimate(p, np.zeros_like(p), spec, 0, "exact", meta={"model": self.model, **self.params})


def _geometric_tail(last: float, ratio: float) -> tuple[float, bool]:
    if last == 0.0:
        return 0.0, True
    if ratio < 1.0:
        return last * ratio / (1.0 - ratio), True
    return math.inf, False


def _check_cut(m_cut) -> int:
    m_cut = int(m_cut)
    if m_cut < 0:
        raise ValueError("m_cut must be >= 0")
    return m_cut


def _auto_cut(build, start: int, threshold: float) -> int:
    """Smallest cutoff past the mode whose last two entries are <= threshold."""
    cut = max(int(start), 8)
    while True:
        p = build(cut)
        mode = int(np.argmax(p))
        for m in range(mode + 2, p.size):
            if p[m] <= threshold and p[m - 1] <= threshold:
                return m
        cut *= 2


def _pair_log_base(M: int, n: float, m: np.ndarray) -> np.ndarray:
    """log[C(M/2+m-1, m) p^(M/2) (1-p)^m] with p = 1/(1+n)."""
    half = M / 2
    logC = gammaln(half + m) - gammaln(m + 1.0) - gammaln(half)
    return logC - half * math.log1p(n) + xlogy(m, n / (1.0 + n))


def _check_even(M) -> int:
    M = int(M)
    if M < 2 or M % 2:
        raise ValueError(f"the squeezed total-count formula needs an even M >= 2, got {M}")
    return M


def lossless_squeezed_total_counts(M: int, r: float, m_cut: int | None = None,
                                   threshold: float = 1e-7) -> ExactDistribution:
    """Total counts of M equal squeezed vacua through a lossless network.

    G(2m) = C(M/2+m-1, m) p^(M/2) (1-p)^m and every odd entry is zero.
    """
    M = _check_even(M)
    if r < 0:
        raise ValueError("r must be >= 0")
    n = math.sinh(r) ** 2

    def build(cut):
        p = np.zeros(cut + 1)
        m = np.arange(cut // 2 + 1, dtype=np.float64)
        p[0::2] = np.exp(_pair_log_base(M, n, m))
        return p

    cut = _auto_cut(build, 2 * M * n + 40, threshold) if m_cut is None else _check_cut(m_cut)
    p = build(cut)
    q = n / (1.0 + n)
    last = cut - (cut % 2)
    ratio = (last / 2 + M / 2) / (last / 2 + 1) * q
    tail, rig = _geometric_tail(p[last], ratio)
    return ExactDistribution(p, "lossless-squeezed", {"M": M, "r": r, "t": 1.0}, tail, rig)


def lossy_squeezed_total_counts(M: int, r: float, t: float, m_cut: int | None = None,
                                threshold: float = 1e-7) -> ExactDistribution:
    """Total counts of M equal squeezed vacua through a unitary with uniform amplitude loss t.

    Even counts 2m:   t^(4m) C p^(M/2) (1-p)^m f_{1/2}
    Odd counts 2m-1:  2m (1-t^2) t^(4m-2) C p^(M/2) (1-p)^m f_{3/2}
    with C = C(M/2+m-1, m), f_c = 2F1(m+1/2, M/2+m; c; z) and z = (1-t^2)^2 (1-p).
    The even line is used at m = 0 as well (C = 1, f = 1).
    """
    M = _check_even(M)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    if r < 0:
        raise ValueError("r must be >= 0")
    n = math.sinh(r) ** 2
    if t == 0.0:
        p = np.zeros(1 if m_cut is None else _check_cut(m_cut) + 1)
        p[0] = 1.0
        return ExactDistribution(p, "lossy-squeezed", {"M": M, "r": r, "t": t}, 0.0, True)
    z = (1.0 - t * t) ** 2 * (n / (1.0 + n))
    log_t = math.log(t)
    log_loss = math.log1p(-t * t) if t < 1.0 else -math.inf

    def build(cut):
        pairs = np.arange(cut // 2 + 2, dtype=np.float64)
        base = _pair_log_base(M, n, pairs)
        log_even = np.full(pairs.size, -np.inf)
        log_odd = np.full(pairs.size, -np.inf)
        for k, mm in enumerate(pairs):
            log_even[k] = (base[k] + 4 * mm * log_t) + log_hyp2f1(mm + 0.5, M / 2 + mm, 0.5, z)[0]
            if k >= 1 and log_loss > -math.inf:
                log_odd[k] = (math.log(2 * mm) + log_loss + (4 * mm - 2) * log_t + base[k]
                              + log_hyp2f1(mm + 0.5, M / 2 + mm, 1.5, z)[0])
        p = np.zeros(2 * pairs.size)
        p[0::2] = np.exp(log_even)
        p[1::2] = np.exp(log_odd[1:].tolist() + [-np.inf])
        return p[: cut + 1]

    cut = _auto_cut(build, 2 * M * n * t * t + 40, threshold) if m_cut is None else _check_cut(m_cut)
    p = build(cut)
    # tail estimated from the decay of the last pair of entries
    if cut >= 3:
        head, prev = p[cut] + p[cut - 1], p[cut - 2] + p[cut - 3]
        ratio = head / prev if prev > 0 else 0.0
        tail, _ = _geometric_tail(head, ratio)
    else:
        tail = math.inf
    return ExactDistribution(p, "lossy-squeezed", {"M": M, "r": r, "t": t}, tail, False)


def poisson_pair_limit(M: int, r: float, m_cut: int | None = None,
                       threshold: float = 1e-7) -> ExactDistribution:
    """Large-M lossless limit: pairs are Poissonian, G(2m) = e^(-lam) lam^m / m!, lam = M n / 2."""
    if int(M) < 1:
        raise ValueError("M must be >= 1")
    lam = int(M) * math.sinh(r) ** 2 / 2.0

    def build(cut):
        p = np.zeros(cut + 1)
        m = np.arange(cut // 2 + 1, dtype=np.float64)
        p[0::2] = np.exp(xlogy(m, lam) - lam - gammaln(m + 1.0))
        return p

    cut = _auto_cut(build, 2 * lam + 40, threshold) if m_cut is None else _check_cut(m_cut)
    p = build(cut)
    last = cut - (cut % 2)
    tail, rig = _geometric_tail(p[last], lam / (last / 2 + 1))
    return ExactDistribution(p, "poisson-pair-limit", {"M": int(M), "r": r}, tail, rig)


def negative_binomial(M: int, n: float, m_cut: int | None = None, threshold: float = 1e-7,
                      model: str = "negative-binomial") -> ExactDistribution:
    """G(m) = C(m+M-1, m) p^M (1-p)^m, p = 1/(1+n): total counts of M thermal modes of mean n."""
    M = int(M)
    if M < 1 or n < 0:
        raise ValueError("need M >= 1 and n >= 0")
    p_ = 1.0 / (1.0 + n)

    def build(cut):
        m = np.arange(cut + 1, dtype=np.float64)
        logC = gammaln(m + M) - gammaln(m + 1.0) - gammaln(M)
        return np.exp(logC + M * math.log(p_) + xlog1py(m, -p_))

    cut = _auto_cut(build, 2 * M * n + 40, threshold) if m_cut is None else _check_cut(m_cut)
    p = build(cut)
    tail, rig = _geometric_tail(p[-1], (cut + M) / (cut + 1) * (1.0 - p_))
    return ExactDistribution(p, model, {"M": M, "n": n, "p": p_}, tail, rig)


def thermal_negative_binomial(M: int, r: float, m_cut: int | None = None,
                              threshold: float = 1e-7) -> ExactDistribution:
    """Total counts of M thermal modes with n = sinh^2 r through a lossless network."""
    d = negative_binomial(M, math.sinh(r) ** 2, m_cut, threshold, "thermal-negative-binomial")
    return ExactDistribution(d.probabilities, d.model, {**d.params, "r": r}, d.tail_bound, d.tail_rigorous)


def geometric(n: float, m_cut: int | None = None, threshold: float = 1e-7) -> ExactDistribution:
    """Single thermal mode: G(m) = p (1-p)^m."""
    return negative_binomial(1, n, m_cut, threshold, "geometric")
