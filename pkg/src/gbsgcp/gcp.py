"""Grouped count probabilities (GCPs) from phase-space ensembles and count patterns."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .linear_network import check_permutation
from .phase_space import PhaseSpaceEnsemble, RunningMoments, photon_products

#: default ceiling on the number of bins in one GCP array
MAX_BINS = 20_000_000
#: edge probability used to choose count windows
DEFAULT_THRESHOLD = 1e-7
DEFAULT_PILOT = 10_000


@dataclass(frozen=True)
class BinningSpec:
    """Disjoint output-mode subsets S_1..S_d with inclusive count windows.

    Mode indices are 0-based. ``windows`` is None until chosen, otherwise one
    ``(m_min, m_max)`` pair per subset.
    """

    subsets: tuple
    windows: tuple | None = None
    max_bins: int = MAX_BINS

    def __post_init__(self):
        subsets = tuple(tuple(sorted(int(i) for i in s)) for s in self.subsets)
        if not subsets:
            raise ValueError("need at least one subset")
        seen = set()
        for s in subsets:
            if not s:
                raise ValueError("empty mode subset")
            if any(i < 0 for i in s):
                raise ValueError("mode indices must be non-negative")
            if seen.intersection(s) or len(set(s)) != len(s):
                raise ValueError("mode subsets overlap")
            seen.update(s)
        object.__setattr__(self, "subsets", subsets)
        if self.windows is not None:
            windows = tuple((int(lo), int(hi)) for lo, hi in self.windows)
            if len(windows) != len(subsets):
                raise ValueError("need one count window per subset")
            for lo, hi in windows:
                if lo < 0 or hi < lo:
                    raise ValueError(f"invalid count window [{lo}, {hi}]")
            object.__setattr__(self, "windows", windows)
            if self.n_bins > self.max_bins:
                raise ValueError(f"{self.n_bins} bins exceed the budget of {self.max_bins}")

    @classmethod
    def contiguous(cls, M: int, d: int = 1, windows=None, modes=None) -> BinningSpec:
        """Split ``modes`` (default all M) into d contiguous, near-equal groups."""
        modes = np.arange(M) if modes is None else np.asarray(modes)
        groups = np.array_split(modes, d)
        return cls(tuple(tuple(g.tolist()) for g in groups), windows)

    @property
    def d(self) -> int:
        return len(self.subsets)

    @property
    def order(self) -> int:
        """Correlation order n = sum |S_j|."""
        return sum(len(s) for s in self.subsets)

    @property
    def shape(self) -> tuple:
        self._require_windows()
        return tuple(hi - lo + 1 for lo, hi in self.windows)

    @property
    def n_bins(self) -> int:
        return int(np.prod([hi - lo + 1 for lo, hi in self.windows]))

    @property
    def m_min(self) -> np.ndarray:
        self._require_windows()
        return np.array([lo for lo, _ in self.windows], dtype=np.int64)

    @property
    def m_max(self) -> np.ndarray:
        self._require_windows()
        return np.array([hi for _, hi in self.windows], dtype=np.int64)

    def axes(self) -> list:
        """Grouped-count values along each axis."""
        return [np.arange(lo, hi + 1) for lo, hi in self.windows]

    def with_windows(self, windows) -> BinningSpec:
        return BinningSpec(self.subsets, windows, self.max_bins)

    def check_modes(self, M: int):
        if self.order > M or max(max(s) for s in self.subsets) >= M:
            raise ValueError(f"binning refers to modes outside 0..{M - 1}")

    def _require_windows(self):
        if self.windows is None:
            raise ValueError("count windows not set; use default_windows()")


@dataclass(frozen=True)
class GcpEstimate:
    """Binned probabilities over the spec's count windows.

    For simulations ``sigma_T`` holds the theoretical sampling error; for
    binned count patterns it is zero, and ``n_samples`` is N_E.
    """

    probabilities: np.ndarray
    sigma_T: np.ndarray
    spec: BinningSpec
    n_samples: int
    kind: str = "theory"
    plan: object = None
    outside: int = 0
    meta: dict = field(default_factory=dict)

    def marginal(self, keep_axis: int) -> GcpEstimate:
        """Sum out every axis except ``keep_axis``.

        The error bar is not propagated (bins are correlated), so ``sigma_T``
        is set to NaN for theory estimates. Binned patterns are marginalized on
        the integer counts, so the result equals direct binning exactly.
        """
        axes = tuple(a for a in range(self.spec.d) if a != keep_axis)
        spec = BinningSpec((self.spec.subsets[keep_axis],), (self.spec.windows[keep_axis],))
        meta = dict(self.meta)
        if "counts" in meta:
            meta["counts"] = meta["counts"].sum(axis=axes)
            p = meta["counts"] / self.n_samples
        else:
            p = self.probabilities.sum(axis=axes)
        sig = np.zeros_like(p) if self.kind == "experiment" else np.full_like(p, np.nan)
        return replace(self, probabilities=p, sigma_T=sig, spec=spec, meta=meta)

    def total(self) -> float:
        return float(self.probabilities.sum())


def _subset_columns(ens: PhaseSpaceEnsemble, spec: BinningSpec):
    return [ens.base_columns(s) for s in spec.subsets]


def _grouped_photon_numbers(x: np.ndarray, cols) -> np.ndarray:
    out = np.empty((x.shape[0], len(cols)), dtype=np.complex128)
    for j, c in enumerate(cols):
        out[:, j] = x[:, c].sum(axis=1)
    return out


def estimate_gcp(ens: PhaseSpaceEnsemble, spec: BinningSpec, error_bars: bool = True) -> GcpEstimate:
    """Positive-P GCP estimate over the spec's count windows.

    For each sample the grouped photon number n'_S = sum_{i in S} alpha'_i
    beta'_i^* is formed per subset, the weights (n'_S)^m e^{-n'_S}/m! are
    multiplied across subsets, and the real part is averaged. sigma_T is the
    standard error across trajectory means.
    """
    spec.check_modes(ens.n_modes)
    spec._require_windows()
    if error_bars:
        ens.plan.require_error_bars()
    cols = _subset_columns(ens, spec)
    m_min, m_max = spec.m_min, spec.m_max
    NS = ens.plan.n_samples

    def work(k0, k1, alpha, beta):
        n_sub = _grouped_photon_numbers(photon_products(alpha, beta), cols)
        return _kernels.gcp_sums(n_sub, m_min, m_max, k1 - k0, NS) / NS

    acc = RunningMoments()
    for means in ens.map_blocks(work, raw=True):
        acc.add(means)
    shape = spec.shape
    probs = acc.mean.reshape(shape)
    sig = acc.standard_error().reshape(shape) if error_bars else np.zeros(shape)
    return GcpEstimate(probs, sig, spec, ens.plan.total, "theory", ens.plan)


def _pilot_marginal(n_sub: np.ndarray, hi: int) -> np.ndarray:
    return _kernels.grouped_weights(n_sub, 0, hi).real.mean(axis=0)


def _scan_edges(p: np.ndarray, threshold: float) -> tuple:
    """Walk outward from the mode until two consecutive bins are <= threshold.

    Requiring two bins keeps lossless even-odd distributions, whose odd
    entries vanish, from being truncated at the first odd count.
    """
    mode = int(np.argmax(p))
    hi = mode
    while hi + 1 < p.size and not (p[hi] <= threshold and hi > mode and p[hi - 1] <= threshold):
        hi += 1
    lo = mode
    while lo > 0 and not (p[lo] <= threshold and lo < mode and p[lo + 1] <= threshold):
        lo -= 1
    return lo, hi


def default_windows(ens: PhaseSpaceEnsemble, spec: BinningSpec, threshold: float = DEFAULT_THRESHOLD,
                    pilot_samples: int = DEFAULT_PILOT) -> BinningSpec:
    """Choose per-subset count windows whose edge probabilities are <= threshold.

    A pilot run over the first trajectories (at least ``pilot_samples``
    samples) estimates each subset's marginal distribution, and the window is
    found by scanning outward from its mode.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    spec.check_modes(ens.n_modes)
    cols = _subset_columns(ens, spec)
    n_traj = max(1, -(-int(pilot_samples) // ens.plan.n_samples))
    parts = [
        _grouped_photon_numbers(photon_products(a, b), cols)
        for a, b in ens.map_blocks(lambda k0, k1, a, b: (a, b), n_traj=n_traj, raw=True)
    ]
    n_sub = np.concatenate(parts)
    windows = []
    for j in range(spec.d):
        nj = n_sub[:, j]
        scale = float(np.max(np.abs(nj))) if nj.size else 0.0
        if scale == 0.0:
            windows.append((0, 0))
            continue
        hi = int(np.ceil(scale + 10.0 * np.sqrt(scale) + 20.0))
        while True:
            p = _pilot_marginal(nj, hi)
            lo_edge, hi_edge = _scan_edges(p, threshold)
            if hi_edge < p.size - 1:
                break
            hi *= 2
        windows.append((lo_edge, hi_edge))
    return spec.with_windows(windows)


def permute_modes(obj, permutation):
    """Relabel modes so that new mode i is old mode ``permutation[i]``.

    Accepts a :class:`PhaseSpaceEnsemble` or a count-pattern set.
    """
    if isinstance(obj, PhaseSpaceEnsemble):
        return obj.permuted(permutation)
    from .stats import CountPatternSet

    if isinstance(obj, CountPatternSet):
        perm = check_permutation(permutation, obj.n_modes)
        return CountPatternSet(obj.patterns[:, perm], dict(obj.metadata, permuted=True))
    raise TypeError(f"cannot permute {type(obj).__name__}")


def grouped_counts(patterns: np.ndarray, spec: BinningSpec) -> np.ndarray:
    """m_j = sum_{i in S_j} c_i for every pattern, shape (N_E, d)."""
    out = np.empty((patterns.shape[0], spec.d), dtype=np.int64)
    for j, s in enumerate(spec.subsets):
        out[:, j] = patterns[:, list(s)].sum(axis=1, dtype=np.int64)
    return out


def bin_patterns(patterns, spec: BinningSpec) -> GcpEstimate:
    """Normalized histogram of grouped counts over the spec's windows.

    Patterns whose grouped counts fall outside any window are tallied in
    ``outside`` and still count toward N_E.
    """
    from .stats import CountPatternSet

    if not isinstance(patterns, CountPatternSet):
        patterns = CountPatternSet(np.asarray(patterns))
    spec.check_modes(patterns.n_modes)
    m = grouped_counts(patterns.patterns, spec)
    lo, hi = spec.m_min, spec.m_max
    inside = np.all((m >= lo) & (m <= hi), axis=1)
    shape = spec.shape
    flat = np.ravel_multi_index(tuple((m[inside] - lo).T), shape) if spec.d else None
    counts = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
    N = patterns.n_samples
    probs = counts / N
    return GcpEstimate(probs, np.zeros(shape), spec, N, "experiment",
                       outside=int(N - inside.sum()), meta={"counts": counts})
