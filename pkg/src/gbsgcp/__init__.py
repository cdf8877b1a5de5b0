"""Positive-P grouped count probabilities for Gaussian boson sampling with PNR detectors."""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .exact_models import (ExactDistribution, hyp2f1, lossless_squeezed_total_counts,
                           lossy_squeezed_total_counts, poisson_pair_limit, thermal_negative_binomial)
from .fake_experiment import DetectorModel, actual_error, generate_patterns
from .gcp import BinningSpec, GcpEstimate, bin_patterns, default_windows, estimate_gcp, permute_modes
from .linear_network import (SqueezerBank, TransmissionMatrix, apply_uniform_loss, haar_unitary,
                             validate_physicality)
from .phase_space import EnsemblePlan, PhaseSpaceEnsemble, mode_moments, propagate, sample_inputs
from .stats import (CountPatternSet, TestReport, chi_square, fit_epsilon_t, moment_z_test,
                    normalized_difference, raw_moment_errors, wilson_hilferty_z)
