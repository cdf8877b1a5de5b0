import math

import numpy as np
import pytest

from gbsgcp.exact_models import thermal_negative_binomial
from gbsgcp.fake_experiment import DetectorModel, actual_error, generate_patterns
from gbsgcp.gcp import BinningSpec, bin_patterns, default_windows, grouped_counts
from gbsgcp.linear_network import SqueezerBank, haar_unitary
from gbsgcp.phase_space import EnsemblePlan, PhaseSpaceEnsemble
from gbsgcp.stats import CountPatternSet, chi_square


def _const(n, shape=(1000, 1000, 1)):
    a = np.full(shape, math.sqrt(n), dtype=complex)
    return PhaseSpaceEnsemble.from_arrays(a, a.copy())


def test_detector_validation():
    with pytest.raises(ValueError):
        DetectorModel(0)
    with pytest.raises(ValueError):
        DetectorModel(5, "drop")
    assert DetectorModel(13).dtype == np.uint8 and DetectorModel(300).dtype == np.uint16


def test_zero_intensity_gives_zero_patterns():
    pats = generate_patterns(_const(0.0, (4, 50, 3)), seed=0)
    assert pats.n_samples == 200 and np.all(pats.patterns == 0)


def test_constant_intensity_is_poisson():
    pats = generate_patterns(_const(2.0), DetectorModel(c_max=50), seed=1)
    c = pats.patterns[:, 0].astype(float)
    assert abs(c.mean() - 2.0) <= 3 * math.sqrt(2.0 / c.size)
    assert c.var() == pytest.approx(c.mean(), rel=0.01)


def test_rejects_nonclassical():
    ens = PhaseSpaceEnsemble.simulate(SqueezerBank.uniform(2, 0.5), haar_unitary(2, 0), EnsemblePlan(10, 2))
    with pytest.raises(ValueError, match="classical"):
        generate_patterns(ens)


def test_clamp_and_renormalize_bounds():
    ens = _const(30.0, (10, 100, 4))
    clamp = generate_patterns(ens, DetectorModel(5, "clamp"), seed=2)
    assert clamp.patterns.max() <= 5 and clamp.patterns.sum(axis=1).max() <= 4 * 5
    assert np.mean(clamp.patterns == 5) > 0.99  # Poisson(30) almost never below 5
    ren = generate_patterns(ens, DetectorModel(5, "renormalize"), seed=2)
    assert ren.patterns.max() <= 5
    # renormalized weights are proportional to 30^c / c!, so c = 5 dominates but not exclusively
    frac = np.bincount(ren.patterns.ravel(), minlength=6) / ren.patterns.size
    w = np.array([30.0**c / math.factorial(c) for c in range(6)])
    np.testing.assert_allclose(frac, w / w.sum(), atol=0.02)


def test_thermal_mixture_super_poissonian():
    ens = PhaseSpaceEnsemble.simulate(SqueezerBank.uniform(4, 0.5, 1.0), haar_unitary(4, 1),
                                      EnsemblePlan(1000, 100, 3))
    c = generate_patterns(ens, DetectorModel(c_max=40), seed=4).patterns.astype(float)
    n = math.sinh(0.5) ** 2
    assert np.all(c.var(axis=0) > c.mean(axis=0))
    np.testing.assert_allclose(c.var(axis=0), n * (n + 1), rtol=0.05)


def test_deterministic_and_seeded():
    ens = PhaseSpaceEnsemble.simulate(SqueezerBank.uniform(3, 0.5, 1.0), haar_unitary(3, 1),
                                      EnsemblePlan(100, 6, 3))
    a = generate_patterns(ens, seed=7).patterns
    np.testing.assert_array_equal(a, generate_patterns(ens.with_workers(3), seed=7).patterns)
    assert not np.array_equal(a, generate_patterns(ens, seed=8).patterns)
    assert generate_patterns(ens).metadata["seed"] == 3


def test_binned_thermal_matches_negative_binomial():
    M = 8
    ens = PhaseSpaceEnsemble.simulate(SqueezerBank.uniform(M, 0.5, 1.0), haar_unitary(M, 2),
                                      EnsemblePlan(1000, 400, 5))
    pats = generate_patterns(ens, DetectorModel(c_max=40), seed=1)
    spec = default_windows(ens, BinningSpec.contiguous(M))
    exp = bin_patterns(pats, spec)
    theo = thermal_negative_binomial(M, 0.5, spec.windows[0][1]).to_estimate(spec)
    rep = chi_square(exp, theo)
    assert 0.5 <= rep.chi2_over_k <= 1.6
    # single code path: grouped counts equal direct row sums
    np.testing.assert_array_equal(grouped_counts(pats.patterns, spec)[:, 0], pats.patterns.sum(axis=1))


def test_actual_error():
    pats = CountPatternSet(np.array([[1, 2], [1, 2]]))
    assert actual_error(CountPatternSet(np.ones((5, 3), int)), 1.0) == 0.0
    assert actual_error(pats, 1.5) == pytest.approx(0.5)


def test_actual_error_scales_with_samples():
    M, n = 50, math.sinh(0.5) ** 2
    bank, U = SqueezerBank.uniform(M, 0.5, 1.0), haar_unitary(M, 0)
    ratios = []
    for rep in range(6):
        small = generate_patterns(PhaseSpaceEnsemble.simulate(bank, U, EnsemblePlan(1000, 20, 10 + rep)),
                                  DetectorModel(13), seed=rep)
        big = generate_patterns(PhaseSpaceEnsemble.simulate(bank, U, EnsemblePlan(1000, 40, 30 + rep)),
                                DetectorModel(13), seed=rep)
        ratios.append(actual_error(small, n) / actual_error(big, n))
    assert abs(np.mean(ratios) / math.sqrt(2) - 1) <= 0.25
