"""Chi-square and Z-score tests, sampling-error estimators and (epsilon, t) fitting."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import stirling2

from .gcp import BinningSpec, GcpEstimate, bin_patterns, default_windows, estimate_gcp
from .linear_network import SqueezerBank, TransmissionMatrix
from .phase_space import EnsemblePlan, PhaseSpaceEnsemble, normally_ordered_moments, photon_products

#: bins need more than this many expected raw counts to enter chi^2
MIN_EXPECTED = 10
#: smallest k for which the Gaussian Z approximation is trusted
MIN_K = 10


class CountPatternSet:
    """N_E x M photon-count patterns (non-negative integers) with provenance metadata."""

    def __init__(self, patterns, metadata: dict | None = None):
        arr = np.asarray(patterns)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] < 1:
            raise ValueError(f"patterns must be a 2-D array with M >= 1 columns, got shape {arr.shape}")
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                raise ValueError("count patterns must be integers")
            arr = arr.astype(np.int64)
        if arr.size and arr.min() < 0:
            raise ValueError("count patterns must be non-negative")
        arr.flags.writeable = False
        self.patterns = arr
        self.metadata = dict(metadata or {})

    @property
    def n_samples(self) -> int:
        return self.patterns.shape[0]

    @property
    def n_modes(self) -> int:
        return self.patterns.shape[1]

    def __len__(self):
        return self.n_samples

    def raw_moments(self, order: int = 1) -> np.ndarray:
        """Per-mode sample raw moments <c_j^k> for k = 1..order, shape (order, M)."""
        c = self.patterns.astype(np.float64)
        return np.stack([(c**k).mean(axis=0) for k in range(1, order + 1)])

    def mode_means(self) -> np.ndarray:
        return self.patterns.mean(axis=0, dtype=np.float64)


@dataclass
class TestReport:
    """chi^2 test outcome. ``normalized`` holds per-bin (G_E - G_T)/sigma (NaN where not admitted)."""

    chi2: float
    k: int
    Z: float
    label: str = "ET"
    normalized: np.ndarray | None = None
    admitted: np.ndarray | None = None
    epsilon: float | None = None
    t: float | None = None
    mode_number: str = ""
    extra: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def chi2_over_k(self) -> float:
        return self.chi2 / self.k if self.k else math.nan

    @property
    def reliable(self) -> bool:
        return self.k >= MIN_K

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("normalized", "admitted"):
            v = d[key]
            if v is not None:
                d[key] = np.where(np.isfinite(v), v, None).tolist() if v.dtype.kind == "f" else v.tolist()
        d.update(chi2_over_k=self.chi2_over_k, reliable=self.reliable)
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def table_row(self) -> dict:
        return {"mode number": self.mode_number, "test": self.label, "chi2/k": self.chi2_over_k,
                "k": self.k, "Z": self.Z, "epsilon": self.epsilon, "t": self.t}


def format_table(reports) -> str:
    """Aligned text table with columns mode number, test, chi2/k, k, Z, epsilon, t."""
    cols = ["mode number", "test", "chi2/k", "k", "Z", "epsilon", "t"]

    def fmt(v, key):
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return "-"
        if key in ("epsilon", "t"):
            return f"{v:.4f}"
        if isinstance(v, float):
            return f"{v:.3g}" if abs(v) < 1e4 else f"{v:.4g}"
        return str(v)

    rows = [[fmt(r.table_row()[c], c) for c in cols] for r in reports]
    widths = [max(len(c), *(len(row[i]) for row in rows)) if rows else len(c) for i, c in enumerate(cols)]
    line = lambda vals: "  ".join(v.rjust(w) for v, w in zip(vals, widths))  # noqa: E731
    return "\n".join([line(cols), line(["-" * w for w in widths])] + [line(r) for r in rows])


def wilson_hilferty_z(chi2: float, k: int) -> float:
    """Z = ((chi^2/k)^(1/3) - (1 - 2/(9k))) / sqrt(2/(9k))."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if chi2 < 0:
        raise ValueError("chi^2 must be non-negative")
    mu = 1.0 - 2.0 / (9.0 * k)
    sigma = math.sqrt(2.0 / (9.0 * k))
    return ((chi2 / k) ** (1.0 / 3.0) - mu) / sigma


def _check_geometry(exp: GcpEstimate, theo: GcpEstimate):
    if exp.probabilities.shape != theo.probabilities.shape:
        raise ValueError(f"bin shapes differ: {exp.probabilities.shape} vs {theo.probabilities.shape}")
    if exp.spec.windows != theo.spec.windows:
        raise ValueError("count windows differ")


def _sigma_i(exp: GcpEstimate, theo: GcpEstimate, n_experiment: int | None):
    """Total per-bin sigma, with sigma_E from the theoretical rate."""
    NE = exp.n_samples if n_experiment is None else int(n_experiment)
    if NE < 1:
        raise ValueError("experimental sample count N_E must be >= 1")
    g = np.clip(theo.probabilities, 0.0, None)
    sig_E2 = g / NE
    sig_T2 = np.nan_to_num(theo.sigma_T) ** 2
    return np.sqrt(sig_E2 + sig_T2), g * NE


def normalized_difference(experimental: GcpEstimate, theoretical: GcpEstimate,
                          min_expected: float = MIN_EXPECTED, n_experiment: int | None = None):
    """Per-bin (G_E - G_T)/sigma_i as a masked array; bins below the count threshold are masked."""
    _check_geometry(experimental, theoretical)
    sig, expected = _sigma_i(experimental, theoretical, n_experiment)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (experimental.probabilities - theoretical.probabilities) / sig
    return np.ma.masked_array(d, mask=~(expected > min_expected) | ~np.isfinite(d))


def chi_square(experimental: GcpEstimate, theoretical: GcpEstimate, min_expected: float = MIN_EXPECTED,
               label: str = "ET", n_experiment: int | None = None, admitted=None) -> TestReport:
    """chi^2 = sum_i (G_E,i - G_T,i)^2 / (sigma_E,i^2 + sigma_T,i^2) over admitted bins.

    sigma_E,i = sqrt(G_T,i / N_E) and a bin is admitted when N_E G_T,i > min_expected,
    unless an explicit boolean ``admitted`` mask is given.
    """
    nd = normalized_difference(experimental, theoretical, min_expected, n_experiment)
    mask = ~np.ma.getmaskarray(nd) if admitted is None else np.asarray(admitted, bool) & np.isfinite(nd.data)
    k = int(mask.sum())
    chi2 = float(np.sum(nd.data[mask] ** 2))
    Z = wilson_hilferty_z(chi2, k) if k else math.nan
    if 0 < k < MIN_K:
        warnings.warn(f"only k={k} admitted bins; Z is unreliable", RuntimeWarning, stacklevel=2)
    normalized = np.where(mask, nd.data, np.nan)
    return TestReport(chi2, k, Z, label, normalized, mask,
                      mode_number=str(experimental.meta.get("mode_number", "")))


# -- sampling errors of moments -------------------------------------------------

def _normal_to_raw(normal: np.ndarray) -> np.ndarray:
    """Raw moments <n^k> = sum_j S(k, j) <:n^j:> from normally ordered ones (rows k = 1..K)."""
    K = normal.shape[0]
    raw = np.zeros_like(normal)
    for k in range(1, K + 1):
        for j in range(1, k + 1):
            raw[k - 1] += stirling2(k, j, exact=True) * normal[j - 1]
    return raw


def _clamped_sqrt(var: np.ndarray, what: str) -> np.ndarray:
    var = np.asarray(var, dtype=np.float64)
    if np.any(var < 0):
        warnings.warn(f"negative {what} variance estimate clamped to 0", RuntimeWarning, stacklevel=3)
    return np.sqrt(np.clip(var, 0.0, None))


def raw_moment_errors(source, order: int = 1, n_experiment: int | None = None) -> np.ndarray:
    """Per-mode error of the sample raw moment <c_j^order>: sqrt((mu'_2n - mu'_n^2)/S).

    ``source`` is a :class:`CountPatternSet` (S = N_E, empirical moments) or a
    :class:`PhaseSpaceEnsemble` (moments from theory; S = ``n_experiment``).
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if isinstance(source, CountPatternSet):
        mom = source.raw_moments(2 * order)
        S = source.n_samples if n_experiment is None else int(n_experiment)
    elif isinstance(source, PhaseSpaceEnsemble):
        if n_experiment is None:
            raise ValueError("n_experiment is required with a phase-space source")
        normal, _, _ = normally_ordered_moments(source, 2 * order, error_bars=False)
        mom = _normal_to_raw(normal)
        S = int(n_experiment)
    else:
        raise TypeError(f"unsupported source {type(source).__name__}")
    return _clamped_sqrt((mom[2 * order - 1] - mom[order - 1] ** 2) / S, "moment")


def cross_moment_errors(source, n_experiment: int | None = None) -> np.ndarray:
    """M x M errors of <c_j c_k> (j != k): sqrt((<c_j^2 c_k^2> - <c_j c_k>^2)/S); NaN diagonal."""
    if isinstance(source, CountPatternSet):
        c = source.patterns.astype(np.float64)
        S = source.n_samples if n_experiment is None else int(n_experiment)
        m11 = c.T @ c / c.shape[0]
        c2 = c * c
        m22 = c2.T @ c2 / c.shape[0]
    elif isinstance(source, PhaseSpaceEnsemble):
        if n_experiment is None:
            raise ValueError("n_experiment is required with a phase-space source")
        S = int(n_experiment)
        M = source.n_modes

        def work(k0, k1, alpha, beta):
            x = photon_products(alpha, beta)
            # normally ordered n^2 -> raw n^2 = :n^2: + :n:
            y = x * x + x
            return (x.T @ x).real, (y.T @ y).real, x.shape[0]

        s11, s22, rows = np.zeros((M, M)), np.zeros((M, M)), 0
        for a, b, nrow in source.map_blocks(work, raw=False):
            s11 += a
            s22 += b
            rows += nrow
        m11, m22 = s11 / rows, s22 / rows
    else:
        raise TypeError(f"unsupported source {type(source).__name__}")
    err = _clamped_sqrt((m22 - m11**2) / S, "cross-moment")
    np.fill_diagonal(err, np.nan)
    return err


def thermal_moment_error(n: float, n_samples: int) -> float:
    """sigma_E = sqrt(n(n+1)/N) for the mean count of a thermal mode."""
    return math.sqrt(n * (n + 1.0) / n_samples)


def poisson_moment_error(n: float, n_samples: int) -> float:
    """sigma = sqrt(n/N), the Poissonian estimate (underestimates thermal fluctuations)."""
    return math.sqrt(n / n_samples)


def moment_z_test(exp_means, theo_means, sigma_T, sigma_E, label: str = "ET") -> TestReport:
    """chi^2 over modes of (<n_j>_E - <n_j>_T)^2/(sigma_E,j^2 + sigma_T,j^2), k = M."""
    e, t = np.asarray(exp_means, float), np.asarray(theo_means, float)
    if e.shape != t.shape or e.ndim != 1:
        raise ValueError("per-mode mean vectors must have equal 1-D shape")
    sig2 = np.broadcast_to(np.asarray(sigma_E, float) ** 2 + np.asarray(sigma_T, float) ** 2, e.shape)
    if np.any(sig2 <= 0):
        raise ValueError("every mode needs a positive combined error")
    nd = (e - t) / np.sqrt(sig2)
    k = e.size
    if k < MIN_K:
        warnings.warn(f"only {k} modes; Z is unreliable", RuntimeWarning, stacklevel=2)
    chi2 = float(np.sum(nd**2))
    return TestReport(chi2, k, wilson_hilferty_z(chi2, k), label, nd, np.ones(k, bool),
                      mode_number=str(k), extra={"statistic": "first-order moments"})


# -- (epsilon, t) fitting -------------------------------------------------------

@dataclass
class FitResult:
    epsilon: float
    t: float
    d_epsilon: float
    d_t: float
    report: TestReport
    converged: bool
    n_iter: int
    n_eval: int
    history: list = field(default_factory=list)


def theory_gcp(bank: SqueezerBank, matrix: TransmissionMatrix, plan: EnsemblePlan, spec: BinningSpec,
               epsilon: float | None = None, t: float | None = None, workers=None) -> GcpEstimate:
    """Positive-P GCP for the thermalized model (epsilon, t) on fixed windows."""
    if epsilon is not None:
        bank = bank.with_epsilon(epsilon)
    if t is not None:
        matrix = matrix.with_correction(t)
    ens = PhaseSpaceEnsemble.simulate(bank, matrix, plan, workers)
    return estimate_gcp(ens, spec)


def fit_epsilon_t(patterns: CountPatternSet, bank: SqueezerBank, matrix: TransmissionMatrix,
                  spec: BinningSpec, plan: EnsemblePlan | None = None, x0=(0.05, 0.99),
                  fix_epsilon: float | None = None, fix_t: float | None = None,
                  final_plan: EnsemblePlan | None = None, xatol: float = 5e-4,
                  max_iter: int = 200, min_expected: float = MIN_EXPECTED, workers=None) -> FitResult:
    """Nelder-Mead fit of (epsilon, t) minimizing chi^2/k of the d=1 GCP.

    Every evaluation reuses ``plan.seed`` so the objective surface is
    deterministic. Bins are admitted once, from the starting model, so k does
    not jump during the search. The optimizer restarts once from its best
    point to recover from simplex collapse. The reported chi^2 is re-evaluated
    with ``final_plan`` (default: a fresh seed) under the standard bin rule.
    """
    plan = plan or EnsemblePlan(500, 800, 0)
    final_plan = final_plan or plan.with_seed(plan.seed + 1)
    if spec.windows is None:
        e0 = x0[0] if fix_epsilon is None else fix_epsilon
        t0 = x0[1] if fix_t is None else fix_t
        pilot = PhaseSpaceEnsemble.simulate(bank.with_epsilon(e0), matrix.with_correction(t0), plan, workers)
        spec = default_windows(pilot, spec)
    exp = bin_patterns(patterns, spec)
    free = [fix_epsilon is None, fix_t is None]

    def unpack(x):
        it = iter(np.atleast_1d(x))
        e = next(it) if free[0] else fix_epsilon
        t = next(it) if free[1] else fix_t
        return float(e), float(t)

    start = [v for v, f in zip(x0, free) if f]
    cache: dict = {}
    admitted = None

    def objective(x):
        nonlocal admitted
        key = tuple(np.round(np.atleast_1d(x), 15))
        if key in cache:
            return cache[key]
        e, t = unpack(x)
        theo = theory_gcp(bank, matrix, plan, spec, e, t, workers)
        if admitted is None:
            admitted = exp.n_samples * np.clip(theo.probabilities, 0, None) > min_expected
        rep = chi_square(exp, theo, min_expected, admitted=admitted)
        cache[key] = rep.chi2_over_k
        return cache[key]

    history: list = []
    n_iter = 0
    converged = True
    resolution = [0.0, 0.0]
    if any(free):
        bounds = [b for b, f in zip([(0.0, 1.0), (1e-6, 1.0)], free) if f]
        x = np.array(start, float)
        remaining = max_iter
        for attempt in range(2):
            steps = np.diag([0.02 if i == 0 and free[0] else 0.01 for i in range(len(x))])
            simplex = np.vstack([x, x + steps])
            for j, (lo, hi) in enumerate(bounds):  # reflect initial vertices into the box
                simplex[:, j] = np.where(simplex[:, j] > hi, 2 * x[j] - simplex[:, j], simplex[:, j])
                simplex[:, j] = np.clip(simplex[:, j], lo, hi)

            def track(xk):
                history.append((*unpack(xk), objective(xk)))

            res = minimize(objective, x, method="Nelder-Mead", bounds=bounds, callback=track,
                           options={"xatol": xatol, "fatol": 1e-9, "maxiter": remaining,
                                    "initial_simplex": simplex})
            n_iter += res.nit
            remaining -= res.nit
            x = res.x
            converged = bool(res.success)
            if not converged or remaining <= 0:
                break
        spread = np.abs(res.final_simplex[0] - res.final_simplex[0][0]).max(axis=0)
        it = iter(spread)
        resolution = [next(it) if f else 0.0 for f in free]
        e_best, t_best = unpack(x)
    else:
        e_best, t_best = fix_epsilon, fix_t
    theo = theory_gcp(bank, matrix, final_plan, spec, e_best, t_best, workers)
    report = chi_square(exp, theo, min_expected, label="ET")
    report.epsilon, report.t = e_best, t_best
    report.mode_number = str(spec.order)
    report.extra = {"converged": converged, "iterations": n_iter}
    return FitResult(e_best, t_best, float(resolution[0]), float(resolution[1]), report,
                     converged, n_iter, len(cache), history)

