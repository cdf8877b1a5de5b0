"""Positive-P sampling of (thermalized) squeezed inputs and network propagation.

Samples are organized as ``n_traj`` trajectories of ``n_samples`` each. Every
trajectory draws from its own Philox stream, keyed by the plan seed and
indexed by the trajectory number through the counter. Any trajectory can be
regenerated in isolation, and results do not depend on how trajectories are
scheduled across workers.
"""

from __future__ import annotations

import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .linear_network import SqueezerBank, TransmissionMatrix, check_permutation

# Philox counter word reserved for the trajectory index
_TRAJ_WORD = 2
#: stream ids for independent uses of one seed
STREAM_INPUTS = 0
STREAM_PILOT = 1
STREAM_FAKE = 2
STREAM_RESAMPLE = 3

# complex elements per generated block and array
_BLOCK_ELEMENTS = 1 << 21
_MATERIALIZE_LIMIT = 1 << 28


@dataclass(frozen=True)
class EnsemblePlan:
    """Sub-ensemble layout E_S = n_samples * n_traj."""

    n_samples: int = 500
    n_traj: int = 4800
    seed: int = 0

    def __post_init__(self):
        if int(self.n_samples) < 1 or int(self.n_traj) < 1:
            raise ValueError("n_samples and n_traj must be >= 1")
        object.__setattr__(self, "n_samples", int(self.n_samples))
        object.__setattr__(self, "n_traj", int(self.n_traj))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def total(self) -> int:
        return self.n_samples * self.n_traj

    def require_error_bars(self):
        if self.n_traj < 2:
            raise ValueError("error bars need n_traj >= 2 trajectories")

    def with_seed(self, seed: int) -> EnsemblePlan:
        return EnsemblePlan(self.n_samples, self.n_traj, seed)


def trajectory_rng(seed: int, stream: int, k: int) -> np.random.Generator:
    """Counter-based generator for trajectory ``k`` of a given stream."""
    state = np.random.SeedSequence(int(seed), spawn_key=(int(stream),)).generate_state(2, np.uint64)
    key = int(state[0]) | (int(state[1]) << 64)
    counter = [0, 0, 0, 0]
    counter[_TRAJ_WORD] = int(k)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def _draw_noise(bank: SqueezerBank, seed: int, k: int, n_samples: int) -> np.ndarray:
    """Real Gaussian noises w, shape (n_samples, 2N)."""
    return trajectory_rng(seed, STREAM_INPUTS, k).standard_normal((n_samples, 2 * bank.n_inputs))


def _sigmas(bank: SqueezerBank):
    vx, vy = bank.quadrature_variances
    # sigma_y is imaginary for nonclassical inputs; keep it complex throughout
    return np.sqrt(vx), np.sqrt(vy.astype(np.complex128))


@dataclass(frozen=True)
class InputAmplitudes:
    """Raw input amplitudes, each of shape (n_traj, n_samples, N)."""

    alpha: np.ndarray
    beta: np.ndarray
    plan: EnsemblePlan


def sample_inputs(bank: SqueezerBank, plan: EnsemblePlan, trajectories=None) -> InputAmplitudes:
    """Draw alpha_j = (sx w_j + i sy w_{j+N})/2, beta_j^* = (sx w_j - i sy w_{j+N})/2."""
    trajectories = range(plan.n_traj) if trajectories is None else trajectories
    sx, sy = _sigmas(bank)
    N = bank.n_inputs
    alphas, betas = [], []
    for k in trajectories:
        w = _draw_noise(bank, plan.seed, k, plan.n_samples)
        x = 0.5 * sx * w[:, :N]
        y = 0.5 * sy * w[:, N:]
        alphas.append(x + 1j * y)
        betas.append(np.conj(x - 1j * y))
    shape = (0, plan.n_samples, N)
    alpha = np.stack(alphas) if alphas else np.empty(shape, complex)
    beta = np.stack(betas) if betas else np.empty(shape, complex)
    return InputAmplitudes(alpha, beta, plan)


def propagate(inputs: InputAmplitudes, matrix: TransmissionMatrix) -> PhaseSpaceEnsemble:
    """alpha' = (t T) alpha and beta' = (t T) beta, sample by sample.

    Inputs beyond the supplied N are vacuum, so only the first N columns of
    the matrix are used.
    """
    N = inputs.alpha.shape[-1]
    if matrix.n_modes < N:
        raise ValueError(f"matrix has {matrix.n_modes} input ports but {N} inputs were given")
    TT = matrix.effective[:, :N].T
    return PhaseSpaceEnsemble.from_arrays(inputs.alpha @ TT, inputs.beta @ TT, inputs.plan)


class RunningMoments:
    """Mean and sum of squared deviations over trajectories, merged in call order."""

    def __init__(self):
        self.count = 0
        self.mean = None
        self.m2 = None

    def add(self, values: np.ndarray):
        """Merge a batch of per-trajectory values (first axis = trajectory)."""
        nb = values.shape[0]
        if nb == 0:
            return
        mb = values.mean(axis=0)
        m2b = ((values - mb) ** 2).sum(axis=0)
        if self.count == 0:
            self.count, self.mean, self.m2 = nb, mb, m2b
            return
        n = self.count + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * (nb / n)
        self.m2 = self.m2 + m2b + delta**2 * (self.count * nb / n)
        self.count = n

    def standard_error(self) -> np.ndarray:
        if self.count < 2:
            raise ValueError("standard error needs at least 2 trajectories")
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


def ordered_map(fn, items, workers: int = 1):
    """``map(fn, items)`` with a bounded thread pool, yielding in input order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        for it in items:
            yield fn(it)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        window = deque()
        it = iter(items)
        for item in it:
            window.append(pool.submit(fn, item))
            if len(window) >= 2 * workers:
                yield window.popleft().result()
        while window:
            yield window.popleft().result()


class PhaseSpaceEnsemble:
    """Output amplitudes (alpha', beta') indexed by (trajectory, sample, mode).

    Built either lazily from a squeezer bank and network (:meth:`simulate`),
    where trajectories are generated block by block on demand, or from stored
    arrays (:meth:`from_arrays`, :func:`propagate`).
    """

    def __init__(self, *, plan, n_modes, bank=None, matrix=None, arrays=None,
                 perm=None, workers=None):
        self.plan = plan
        self.n_modes = int(n_modes)
        self._bank = bank
        self._matrix = matrix
        self._arrays = arrays
        self._perm = None if perm is None else check_permutation(perm, self.n_modes)
        self.workers = int(workers or os.cpu_count() or 1)
        if arrays is None:
            N = bank.n_inputs
            if matrix.n_modes < N:
                raise ValueError(f"matrix has {matrix.n_modes} input ports but {N} inputs were given")
            T = matrix.effective[:, :N]
            self._TrT = np.ascontiguousarray(T.real.T)
            self._TiT = np.ascontiguousarray(T.imag.T)
            self._sx, self._sy = _sigmas(bank)
            self._has_real_y = bool(np.any(self._sy.real != 0))
            self._has_imag_y = bool(np.any(self._sy.imag != 0))

    @classmethod
    def simulate(cls, bank: SqueezerBank, matrix: TransmissionMatrix, plan: EnsemblePlan,
                 workers=None) -> PhaseSpaceEnsemble:
        return cls(plan=plan, n_modes=matrix.n_modes, bank=bank, matrix=matrix, workers=workers)

    @classmethod
    def from_arrays(cls, alpha_out, beta_out, plan: EnsemblePlan | None = None) -> PhaseSpaceEnsemble:
        alpha = np.asarray(alpha_out, dtype=np.complex128)
        beta = np.asarray(beta_out, dtype=np.complex128)
        if alpha.ndim != 3 or alpha.shape != beta.shape:
            raise ValueError("alpha_out and beta_out must share shape (n_traj, n_samples, M)")
        if plan is None:
            plan = EnsemblePlan(alpha.shape[1], alpha.shape[0], 0)
        if (plan.n_traj, plan.n_samples) != alpha.shape[:2]:
            raise ValueError("array shape does not match the ensemble plan")
        return cls(plan=plan, n_modes=alpha.shape[2], arrays=(alpha, beta), workers=1)

    # -- structure -------------------------------------------------------
    @property
    def bank(self):
        return self._bank

    @property
    def matrix(self):
        return self._matrix

    @property
    def is_classical(self) -> bool:
        """True when beta' = alpha' for every sample (diagonal-P regime)."""
        if self._arrays is not None:
            return bool(np.array_equal(self._arrays[0], self._arrays[1]))
        return not self._has_imag_y

    def base_columns(self, modes) -> np.ndarray:
        """Underlying (unpermuted) column indices of the given modes, sorted."""
        modes = np.asarray(modes, dtype=np.intp)
        cols = modes if self._perm is None else self._perm[modes]
        return np.sort(cols)

    def permuted(self, perm) -> PhaseSpaceEnsemble:
        """Relabel output modes: new mode i is current mode ``perm[i]``."""
        perm = check_permutation(perm, self.n_modes)
        composed = perm if self._perm is None else self._perm[perm]
        new = object.__new__(PhaseSpaceEnsemble)
        new.__dict__.update(self.__dict__)
        new._perm = composed
        return new

    def with_workers(self, workers: int) -> PhaseSpaceEnsemble:
        new = object.__new__(PhaseSpaceEnsemble)
        new.__dict__.update(self.__dict__)
        new.workers = int(workers)
        return new

    # -- generation ------------------------------------------------------
    def block_ranges(self, traj_per_block: int | None = None, n_traj: int | None = None):
        n_traj = self.plan.n_traj if n_traj is None else min(n_traj, self.plan.n_traj)
        if traj_per_block is None:
            traj_per_block = max(1, _BLOCK_ELEMENTS // (self.plan.n_samples * self.n_modes))
        return [(k, min(k + traj_per_block, n_traj)) for k in range(0, n_traj, traj_per_block)]

    def raw_block(self, k0: int, k1: int):
        """Output amplitudes for trajectories [k0, k1), unpermuted, shape (rows, M)."""
        if self._arrays is not None:
            a, b = self._arrays
            M = self.n_modes
            return a[k0:k1].reshape(-1, M), b[k0:k1].reshape(-1, M)
        N = self._bank.n_inputs
        w = np.concatenate([_draw_noise(self._bank, self.plan.seed, k, self.plan.n_samples)
                            for k in range(k0, k1)])
        x = 0.5 * self._sx * w[:, :N]
        # sigma_y is real or purely imaginary per mode, so y splits into two real arrays
        # alpha = (x - Im y) + i Re y,  beta = (x + Im y) + i Re y
        TrT, TiT = self._TrT, self._TiT
        if self._has_real_y:
            c = 0.5 * self._sy.real * w[:, N:]
            cr, ci = c @ TrT, c @ TiT
        if self._has_imag_y:
            yi = 0.5 * self._sy.imag * w[:, N:]
            a, b = x - yi, x + yi
        else:
            a = b = x

        def assemble(v):
            out = np.empty(cr.shape if self._has_real_y else (v.shape[0], TrT.shape[1]), np.complex128)
            out.real = v @ TrT
            out.imag = v @ TiT
            if self._has_real_y:
                out.real -= ci
                out.imag += cr
            return out

        alpha = assemble(a)
        if not self._has_imag_y:
            return alpha, alpha
        return alpha, assemble(b)

    def block(self, k0: int, k1: int):
        """Output amplitudes for trajectories [k0, k1) in current mode labels."""
        alpha, beta = self.raw_block(k0, k1)
        if self._perm is not None:
            alpha, beta = alpha[:, self._perm], beta[:, self._perm]
        return alpha, beta

    def map_blocks(self, fn, n_traj: int | None = None, raw: bool = True):
        """Apply ``fn(k0, k1, alpha, beta)`` to every block, yielding in trajectory order."""
        get = self.raw_block if raw else self.block

        def run(rng):
            k0, k1 = rng
            alpha, beta = get(k0, k1)
            return fn(k0, k1, alpha, beta)

        return ordered_map(run, self.block_ranges(n_traj=n_traj), self.workers)

    @property
    def alpha_out(self) -> np.ndarray:
        return self._materialize()[0]

    @property
    def beta_out(self) -> np.ndarray:
        return self._materialize()[1]

    def _materialize(self):
        size = self.plan.total * self.n_modes
        if size > _MATERIALIZE_LIMIT:
            raise MemoryError(f"ensemble holds {size} amplitudes; stream it with map_blocks")
        a, b = self.block(0, self.plan.n_traj)
        shape = (self.plan.n_traj, self.plan.n_samples, self.n_modes)
        return a.reshape(shape), b.reshape(shape)


def photon_products(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Per-mode phase-space photon numbers n'_i = alpha'_i (beta'_i)^*."""
    if alpha is beta:
        return (alpha.real**2 + alpha.imag**2).astype(np.complex128)
    return alpha * np.conj(beta)


@dataclass(frozen=True)
class ModeMoments:
    """Per-mode mean output photon number with its theoretical sampling error."""

    mean: np.ndarray
    sigma_T: np.ndarray | None
    mean_imag: np.ndarray
    n_samples: int


def normally_ordered_moments(ens: PhaseSpaceEnsemble, max_order: int = 1, error_bars: bool = True):
    """<:n'_j^k:> for k = 1..max_order.

    Returns ``(mean, sigma_T)``, each of shape (max_order, M); ``sigma_T`` is
    None without error bars.
    """
    if error_bars:
        ens.plan.require_error_bars()
    M, NS = ens.n_modes, ens.plan.n_samples
    orders = np.arange(1, max_order + 1)

    def work(k0, k1, alpha, beta):
        x = photon_products(alpha, beta).reshape(k1 - k0, NS, M)
        powers = x[..., None, :] ** orders[:, None]  # (b, NS, K, M)
        return powers.mean(axis=1)

    re, im = RunningMoments(), RunningMoments()
    for block_means in ens.map_blocks(work, raw=False):
        re.add(block_means.real)
        im.add(block_means.imag)
    sig = re.standard_error() if error_bars else None
    return re.mean, sig, im.mean


def mode_moments(ens: PhaseSpaceEnsemble, error_bars: bool = True) -> ModeMoments:
    """Per-mode <n'_j> = Re<alpha'_j beta'_j^*> with sigma_T from trajectory means."""
    mean, sig, imag = normally_ordered_moments(ens, 1, error_bars)
    return ModeMoments(mean[0], None if sig is None else sig[0], imag[0], ens.plan.total)
