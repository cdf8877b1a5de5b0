import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbsgcp.exact_models import geometric
from gbsgcp.gcp import (BinningSpec, GcpEstimate, bin_patterns, default_windows, estimate_gcp, grouped_counts,
                        permute_modes)
from gbsgcp.linear_network import SqueezerBank, TransmissionMatrix, apply_uniform_loss, haar_unitary
from gbsgcp.phase_space import EnsemblePlan, PhaseSpaceEnsemble
from gbsgcp.stats import CountPatternSet
from oracles import gcp_generating_function


def _sim(M, r, t=1.0, eps=0.0, plan=EnsemblePlan(500, 200, 1), seed=3, N=None):
    bank = SqueezerBank.uniform(N or M, r, eps)
    T = apply_uniform_loss(haar_unitary(M, seed), t)
    return bank, T, PhaseSpaceEnsemble.simulate(bank, T, plan)


def _agree(est: GcpEstimate, ref: np.ndarray, k=3.0):
    """Fraction of bins within k sigma_T of the reference (bins with sigma_T = 0 must match to 1e-12)."""
    d = np.abs(est.probabilities - ref)
    ok = np.where(est.sigma_T > 0, d <= k * est.sigma_T, d <= 1e-12)
    return ok.mean()


def test_spec_validation():
    with pytest.raises(ValueError, match="overlap"):
        BinningSpec(((0, 1), (1, 2)))
    with pytest.raises(ValueError, match="empty"):
        BinningSpec(((0,), ()))
    with pytest.raises(ValueError):
        BinningSpec(((-1,),))
    with pytest.raises(ValueError, match="window"):
        BinningSpec(((0,),), ((3, 2),))
    with pytest.raises(ValueError, match="one count window"):
        BinningSpec(((0,), (1,)), ((0, 2),))
    with pytest.raises(ValueError, match="budget"):
        BinningSpec(((0,), (1,)), ((0, 9999), (0, 9999)), max_bins=10**6)
    spec = BinningSpec.contiguous(16, 3)
    assert spec.d == 3 and spec.order == 16 and spec.subsets[0] == tuple(range(6))
    with pytest.raises(ValueError, match="windows"):
        spec.shape
    with pytest.raises(ValueError, match="outside"):
        BinningSpec(((0, 5),), ((0, 3),)).check_modes(4)


def test_vacuum_delta():
    _, _, ens = _sim(4, 0.0, plan=EnsemblePlan(20, 5, 0))
    est = estimate_gcp(ens, BinningSpec.contiguous(4, 2, ((0, 3), (0, 3))))
    expected = np.zeros((4, 4))
    expected[0, 0] = 1.0
    np.testing.assert_array_equal(est.probabilities, expected)
    assert np.all(est.sigma_T == 0)


def test_vacuum_window_collapses():
    _, _, ens = _sim(4, 0.0, plan=EnsemblePlan(20, 5, 0))
    assert default_windows(ens, BinningSpec.contiguous(4, 2)).windows == ((0, 0), (0, 0))


def test_thermal_single_mode_window():
    # geometric tail p(1-p)^m <= 1e-7 first holds at m = 11; two edge bins are required
    _, _, ens = _sim(1, 0.5, eps=1.0, plan=EnsemblePlan(1000, 10, 2))
    spec = default_windows(ens, BinningSpec(((0,),)), pilot_samples=10_000)
    lo, hi = spec.windows[0]
    assert lo == 0 and abs(hi - geometric(np.sinh(0.5) ** 2).m_cut) <= 1
    with pytest.raises(ValueError):
        default_windows(ens, BinningSpec(((0,),)), threshold=0.0)


def test_windows_grow_for_large_mean():
    _, _, ens = _sim(8, 1.2, t=0.9, plan=EnsemblePlan(500, 20, 4))
    lo, hi = default_windows(ens, BinningSpec.contiguous(8)).windows[0]
    mean = 8 * 0.81 * np.sinh(1.2) ** 2
    assert lo < mean < hi and hi > mean + 3 * np.sqrt(mean)


def test_two_mode_matches_generating_function_oracle():
    M, r, t = 2, 0.3, 0.8
    bank, T, ens = _sim(M, r, t, plan=EnsemblePlan(1000, 1000, 11))
    est = estimate_gcp(ens, BinningSpec(((0, 1),), ((0, 20),)))
    ref = gcp_generating_function(bank.r, 0.0, T.effective, [(0, 1)], K=64)[:21]
    assert _agree(est, ref) >= 0.95
    assert np.abs(est.probabilities - ref).max() < 2e-3


def test_lossless_low_counts_match_oracle():
    # without loss the sampled weights are heavy tailed, so only the leading bins converge at 1e6 samples
    bank, T, ens = _sim(2, 0.3, 1.0, plan=EnsemblePlan(1000, 1000, 11))
    est = estimate_gcp(ens, BinningSpec(((0, 1),), ((0, 4),)))
    ref = gcp_generating_function(bank.r, 0.0, T.effective, [(0, 1)], K=64)[:5]
    assert np.all(np.abs(est.probabilities - ref) <= 3 * est.sigma_T)


def test_two_mode_d2_matches_oracle():
    bank, T, ens = _sim(2, 0.4, 0.8, plan=EnsemblePlan(1000, 400, 12))
    est = estimate_gcp(ens, BinningSpec(((0,), (1,)), ((0, 7), (0, 7))))
    ref = gcp_generating_function(bank.r, 0.0, T.effective, [(0,), (1,)], K=32)[:8, :8]
    assert _agree(est, ref) >= 0.95


def test_partial_order_matches_oracle():
    # n < M: mode 1 belongs to no subset and is marginalized out
    bank, T, ens = _sim(3, 0.5, 0.9, plan=EnsemblePlan(1000, 400, 13))
    spec = BinningSpec(((0,), (2,)), ((0, 6), (0, 6)))
    est = estimate_gcp(ens, spec)
    ref = gcp_generating_function(bank.r, 0.0, T.effective, spec.subsets, K=32)[:7, :7]
    assert _agree(est, ref) >= 0.95


def test_thermalized_input_matches_oracle():
    bank, T, ens = _sim(2, 0.5, 0.9, eps=0.4, plan=EnsemblePlan(1000, 400, 14))
    est = estimate_gcp(ens, BinningSpec(((0, 1),), ((0, 14),)))
    ref = gcp_generating_function(bank.r, 0.4, T.effective, [(0, 1)], K=64)[:15]
    assert _agree(est, ref) >= 0.95


def test_unbiased_across_seeds():
    r, t = 0.3, 0.8
    bank = SqueezerBank.uniform(2, r)
    T = apply_uniform_loss(haar_unitary(2, 3), t)
    ref = gcp_generating_function(bank.r, 0.0, T.effective, [(0, 1)], K=64)[:9]
    excursions = 0
    for seed in range(10):
        ens = PhaseSpaceEnsemble.simulate(bank, T, EnsemblePlan(500, 100, 100 + seed))
        est = estimate_gcp(ens, BinningSpec(((0, 1),), ((0, 8),)))
        excursions += int(np.any(np.abs(est.probabilities - ref) > 3 * est.sigma_T))
    assert excursions <= 2


def test_sigma_halves_when_ensemble_quadruples():
    bank, T, _ = _sim(4, 0.5, 0.6, plan=EnsemblePlan(2, 2))
    spec = BinningSpec(((0, 1, 2, 3),), ((0, 8),))
    ratios = []
    for rep in range(4):
        s1 = estimate_gcp(PhaseSpaceEnsemble.simulate(bank, T, EnsemblePlan(100, 200, rep)), spec).sigma_T
        s4 = estimate_gcp(PhaseSpaceEnsemble.simulate(bank, T, EnsemblePlan(100, 800, 50 + rep)), spec).sigma_T
        ratios.append(np.median(s1 / s4))
    assert abs(np.mean(ratios) - 2.0) <= 0.4


def test_error_bars_need_two_trajectories():
    _, _, ens = _sim(2, 0.5, plan=EnsemblePlan(10, 1))
    spec = BinningSpec(((0, 1),), ((0, 4),))
    with pytest.raises(ValueError):
        estimate_gcp(ens, spec)
    assert np.all(estimate_gcp(ens, spec, error_bars=False).sigma_T == 0)


def test_marginal_consistency():
    _, _, ens = _sim(16, 0.89, 0.6, plan=EnsemblePlan(200, 50, 1))
    s2 = BinningSpec((tuple(range(8)), tuple(range(8, 16))), ((0, 30), (0, 120)))
    s1 = BinningSpec((tuple(range(8)),), ((0, 30),))
    a = estimate_gcp(ens, s2).marginal(0)
    b = estimate_gcp(ens, s1)
    assert np.abs(a.probabilities - b.probabilities).max() <= 1e-12
    assert np.all(np.isnan(a.sigma_T)) and a.spec == s1


def test_total_count_permutation_invariant():
    _, _, ens = _sim(6, 0.7, 0.8, plan=EnsemblePlan(50, 10, 5))
    spec = BinningSpec((tuple(range(6)),), ((0, 20),))
    base = estimate_gcp(ens, spec).probabilities
    same = estimate_gcp(permute_modes(ens, np.arange(6)), spec).probabilities
    np.testing.assert_array_equal(same, base)
    perm = estimate_gcp(permute_modes(ens, [5, 3, 1, 0, 2, 4]), spec).probabilities
    assert np.abs(perm - base).max() <= 1e-15


def test_permutation_relabels_subsets():
    _, _, ens = _sim(4, 0.7, 0.8, plan=EnsemblePlan(50, 10, 5))
    perm = [2, 0, 3, 1]
    a = estimate_gcp(permute_modes(ens, perm), BinningSpec(((0, 1),), ((0, 10),))).probabilities
    b = estimate_gcp(ens, BinningSpec(((2, 0),), ((0, 10),))).probabilities
    assert np.abs(a - b).max() <= 1e-15
    with pytest.raises(ValueError):
        permute_modes(ens, [0, 0, 1, 2])
    with pytest.raises(TypeError):
        permute_modes(np.zeros((2, 2)), [1, 0])


def test_permute_patterns():
    pats = CountPatternSet(np.array([[1, 2, 3], [4, 5, 6]]))
    p = permute_modes(pats, [2, 0, 1])
    np.testing.assert_array_equal(p.patterns, [[3, 1, 2], [6, 4, 5]])
    assert p.metadata["permuted"]


def test_bin_patterns_basic():
    est = bin_patterns(np.zeros((5, 3), int), BinningSpec(((0, 1, 2),), ((0, 4),)))
    np.testing.assert_array_equal(est.probabilities, [1, 0, 0, 0, 0])
    est = bin_patterns(np.array([[2, 1]]), BinningSpec(((0,), (1,)), ((0, 3), (0, 3))))
    assert est.probabilities[2, 1] == 1.0 and est.total() == 1.0
    assert est.kind == "experiment" and est.n_samples == 1


def test_bin_patterns_outside_tally():
    pats = np.array([[0, 0], [1, 1], [5, 0], [9, 9]])
    est = bin_patterns(pats, BinningSpec(((0, 1),), ((1, 5),)))
    np.testing.assert_array_equal(est.meta["counts"], [0, 1, 0, 0, 1])
    assert est.outside == 2 and est.total() == 0.5


def test_bin_patterns_rejects_bad_input():
    with pytest.raises(ValueError):
        bin_patterns(np.array([[1, -1]]), BinningSpec(((0, 1),), ((0, 3),)))
    with pytest.raises(ValueError):
        bin_patterns(np.array([[1, 1]]), BinningSpec(((0, 2),), ((0, 3),)))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 3))
def test_binned_marginal_bit_exact(seed, d):
    rng = np.random.default_rng(seed)
    M = 16
    pats = CountPatternSet(rng.poisson(0.7, size=(300, M)))
    modes = rng.permutation(M)[: rng.integers(d + 1, M + 1)]
    cuts = np.sort(rng.choice(np.arange(1, modes.size), d, replace=False)) if d > 1 else []
    subsets = [s.tolist() for s in np.split(modes, cuts) if s.size][: max(d, 2)]
    if len(subsets) < 2:
        subsets = [modes[:1].tolist(), modes[1:].tolist()]
    windows = [(0, int(grouped_counts(pats.patterns, BinningSpec((s,))).max())) for s in subsets]
    full = bin_patterns(pats, BinningSpec(subsets, windows))
    for j in range(len(subsets)):
        one = bin_patterns(pats, BinningSpec((subsets[j],), (windows[j],)))
        np.testing.assert_array_equal(full.marginal(j).probabilities, one.probabilities)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_gcp_sums_to_one_over_full_window(seed):
    # weights sum to one per sample when the window covers all counts with non-negligible weight
    _, _, ens = _sim(3, 0.4, 0.9, plan=EnsemblePlan(50, 4, seed))
    est = estimate_gcp(ens, BinningSpec(((0, 1, 2),), ((0, 80),)), error_bars=False)
    assert abs(est.total() - 1.0) < 1e-10


def test_matrix_with_t_correction_used():
    bank = SqueezerBank.uniform(2, 0.5)
    U = haar_unitary(2, 0)
    T = TransmissionMatrix(U.T, 0.5)
    ens = PhaseSpaceEnsemble.simulate(bank, T, EnsemblePlan(100, 10, 0))
    ref = PhaseSpaceEnsemble.simulate(bank, apply_uniform_loss(U, 0.5), EnsemblePlan(100, 10, 0))
    spec = BinningSpec(((0, 1),), ((0, 6),))
    np.testing.assert_allclose(estimate_gcp(ens, spec).probabilities, estimate_gcp(ref, spec).probabilities,
                               atol=1e-14)
