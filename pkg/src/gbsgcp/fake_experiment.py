"""Synthetic PNR count patterns from classical (diagonal-P) phase-space ensembles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .phase_space import STREAM_FAKE, PhaseSpaceEnsemble, trajectory_rng
from .stats import CountPatternSet

TAIL_POLICIES = ("renormalize", "clamp")


@dataclass(frozen=True)
class DetectorModel:
    """PNR detector saturating at ``c_max`` counts.

    ``renormalize`` redistributes the Poisson mass beyond c_max over 0..c_max;
    ``clamp`` records every count >= c_max as c_max.
    """

    c_max: int = 13
    tail_policy: str = "renormalize"

    def __post_init__(self):
        if int(self.c_max) < 1:
            raise ValueError("c_max must be >= 1")
        if self.tail_policy not in TAIL_POLICIES:
            raise ValueError(f"tail_policy must be one of {TAIL_POLICIES}")
        object.__setattr__(self, "c_max", int(self.c_max))

    @property
    def dtype(self):
        return np.min_scalar_type(self.c_max)


def _require_classical(ens: PhaseSpaceEnsemble):
    if not ens.is_classical:
        raise ValueError("fake sampling needs a classical ensemble (beta' = alpha'); "
                         "the inputs are nonclassical")


def generate_patterns(ens: PhaseSpaceEnsemble, det: DetectorModel = DetectorModel(),
                      seed: int | None = None) -> CountPatternSet:
    """One count pattern per phase-space sample (N_F = E_S).

    Each mode's count is drawn by inverse CDF from the Poisson weights
    (n'_j)^c e^{-n'_j} / c! with n'_j = |alpha'_j|^2, using one uniform per
    (sample, mode). Uniforms come from the trajectory's own counter-based
    stream, so patterns do not depend on scheduling.
    """
    _require_classical(ens)
    seed = ens.plan.seed if seed is None else int(seed)
    renorm = det.tail_policy == "renormalize"
    NS, M = ens.plan.n_samples, ens.n_modes

    def work(k0, k1, alpha, beta):
        intensity = alpha.real**2 + alpha.imag**2
        u = np.concatenate([trajectory_rng(seed, STREAM_FAKE, k).random((NS, M)) for k in range(k0, k1)])
        return _kernels.poisson_counts(intensity, u, det.c_max, renorm).astype(det.dtype)

    out = np.concatenate(list(ens.map_blocks(work, raw=False)))
    meta = {"source": "fake", "seed": seed, "c_max": det.c_max, "tail_policy": det.tail_policy,
            "n_samples": ens.plan.n_samples, "n_traj": ens.plan.n_traj}
    return CountPatternSet(out, meta)


def actual_error(patterns: CountPatternSet, expected_mean: float) -> float:
    """sigma_A = sqrt(mean_j (nbar_j - n)^2): RMS deviation of per-mode means from the expected mean."""
    nbar = patterns.mode_means()
    return float(np.sqrt(np.mean((nbar - expected_mean) ** 2)))
