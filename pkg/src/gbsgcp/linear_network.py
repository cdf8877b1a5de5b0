"""Input squeezed states and linear-network transmission matrices."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

#: tolerance for accepting an ingested matrix as physical (loss only)
PHYSICAL_TOL = 1e-9
#: tolerance for internally generated unitaries
UNITARY_TOL = 1e-12


@dataclass(frozen=True)
class SqueezerBank:
    """Per-mode squeezing parameters with a common thermalization fraction.

    ``epsilon = 0`` is pure squeezed vacuum; ``epsilon = 1`` leaves a thermal
    state with the same photon number.
    """

    r: np.ndarray
    epsilon: float = 0.0

    def __post_init__(self):
        r = np.atleast_1d(np.asarray(self.r, dtype=np.float64)).copy()
        if r.ndim != 1 or r.size < 1:
            raise ValueError("r must be a non-empty vector")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ValueError("squeezing parameters must be finite and non-negative")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon={self.epsilon} outside [0, 1]")
        r.flags.writeable = False
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @classmethod
    def uniform(cls, n_inputs: int, r: float, epsilon: float = 0.0) -> SqueezerBank:
        return cls(np.full(int(n_inputs), float(r)), epsilon)

    @property
    def n_inputs(self) -> int:
        return self.r.size

    @property
    def photon_number(self) -> np.ndarray:
        """n_j = sinh^2 r_j."""
        return np.sinh(self.r) ** 2

    @property
    def coherence(self) -> np.ndarray:
        """Thermalized coherence (1 - epsilon) cosh r_j sinh r_j."""
        return (1.0 - self.epsilon) * np.cosh(self.r) * np.sinh(self.r)

    @property
    def quadrature_variances(self) -> tuple[np.ndarray, np.ndarray]:
        """Normally ordered variances (sigma_x^2, sigma_y^2); sigma_y^2 < 0 is nonclassical."""
        n, m = self.photon_number, self.coherence
        return 2.0 * (n + m), 2.0 * (n - m)

    @property
    def is_classical(self) -> bool:
        return bool(np.all(self.quadrature_variances[1] >= 0.0))

    def with_epsilon(self, epsilon: float) -> SqueezerBank:
        return SqueezerBank(self.r, epsilon)


@dataclass(frozen=True)
class TransmissionMatrix:
    """Complex M x M network matrix; the effective matrix is ``t_correction * T``."""

    T: np.ndarray
    t_correction: float = 1.0
    _effective: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        T = np.array(self.T, dtype=np.complex128)
        if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] < 1:
            raise ValueError(f"transmission matrix must be square, got shape {T.shape}")
        if not np.all(np.isfinite(T)):
            raise ValueError("transmission matrix has non-finite entries")
        if not 0.0 < self.t_correction <= 1.0:
            raise ValueError(f"t_correction={self.t_correction} outside (0, 1]")
        T.flags.writeable = False
        eff = self.t_correction * T
        eff.flags.writeable = False
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "t_correction", float(self.t_correction))
        object.__setattr__(self, "_effective", eff)

    @property
    def n_modes(self) -> int:
        return self.T.shape[0]

    @property
    def effective(self) -> np.ndarray:
        return self._effective

    def with_correction(self, t: float) -> TransmissionMatrix:
        return TransmissionMatrix(self.T, t)

    def permuted_outputs(self, perm) -> TransmissionMatrix:
        """Relabel output modes: new row i is old row ``perm[i]``."""
        perm = check_permutation(perm, self.n_modes)
        return TransmissionMatrix(self.T[perm, :], self.t_correction)


def check_permutation(perm, n: int) -> np.ndarray:
    perm = np.asarray(perm)
    if perm.shape != (n,) or not np.issubdtype(perm.dtype, np.integer):
        raise ValueError(f"permutation must be {n} integers")
    if not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError("mapping is not a bijection on the mode indices")
    return perm.astype(np.intp)


def haar_unitary(M: int, seed=None) -> TransmissionMatrix:
    """Haar-random M x M unitary from the QR decomposition of a Ginibre matrix.

    The phases of R's diagonal are moved into Q so the distribution is exactly
    Haar rather than QR-convention dependent.
    """
    M = int(M)
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = np.random.default_rng(seed)
    Z = (rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))) / np.sqrt(2.0)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return TransmissionMatrix(Q * (d / np.abs(d)))


def apply_uniform_loss(U: TransmissionMatrix, t_amp: float) -> TransmissionMatrix:
    """Scale the network by a uniform amplitude transmission ``t_amp``.

    ``U`` must be unitary or already uniformly lossy (all singular values
    equal), so that repeated losses compose multiplicatively.
    """
    if not 0.0 <= t_amp <= 1.0:
        raise ValueError(f"amplitude loss coefficient {t_amp} outside [0, 1]")
    s = np.linalg.svd(U.T, compute_uv=False)
    if s.max() > 1.0 + PHYSICAL_TOL or s.max() - s.min() > PHYSICAL_TOL:
        raise ValueError("apply_uniform_loss expects a unitary (or uniformly scaled unitary) matrix")
    # keep the correction factor separate so t_amp always multiplies the stored T
    return TransmissionMatrix(t_amp * U.T, U.t_correction)


def validate_physicality(T: TransmissionMatrix, tol: float = PHYSICAL_TOL):
    """Check that ``t_correction * T`` only removes photons.

    Returns ``(ok, diagnostic)``; the diagnostic holds all singular values and
    the offending ones (> 1 + tol).
    """
    s = np.linalg.svd(T.effective, compute_uv=False)
    bad = s[s > 1.0 + tol]
    return bool(bad.size == 0), {"singular_values": s, "offending": bad, "tol": tol}


def write_matrix(path, T) -> None:
    """Write a matrix as ``M=<int>`` then one row per line of ``re,im`` pairs."""
    T = T.T if isinstance(T, TransmissionMatrix) else np.asarray(T, dtype=np.complex128)
    lines = [f"M={T.shape[0]}"]
    for row in T:
        lines.append(" ".join(f"{z.real:.17g},{z.imag:.17g}" for z in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path, t_correction: float = 1.0) -> TransmissionMatrix:
    text = Path(path).read_text().splitlines()
    rows = [ln.strip() for ln in text if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or not rows[0].startswith("M="):
        raise ValueError(f"{path}: missing 'M=<int>' header")
    M = int(rows[0][2:])
    body = rows[1:]
    if len(body) != M:
        raise ValueError(f"{path}: header says M={M} but found {len(body)} rows")
    T = np.empty((M, M), dtype=np.complex128)
    for i, ln in enumerate(body):
        toks = ln.split()
        if len(toks) != M:
            raise ValueError(f"{path}: row {i + 1} has {len(toks)} entries, expected {M}")
        for j, tok in enumerate(toks):
            re, im = tok.split(",")
            T[i, j] = complex(float(re), float(im))
    return TransmissionMatrix(T, t_correction)


def read_squeezers(path, epsilon: float = 0.0) -> SqueezerBank:
    """One squeezing parameter per line."""
    vals = [
        float(ln.split()[0])
        for ln in Path(path).read_text().splitlines()
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    return SqueezerBank(np.array(vals), epsilon)
