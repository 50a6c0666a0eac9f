"""Unbiased Monte Carlo estimation of first-exit-time functionals and their
time derivatives for one-dimensional uniformly elliptic diffusions.

The estimators simulate a reflected Markov chain on random jump times and
attach integration-by-parts weights so that finite expectations of the
discrete chain match the continuous-time targets exactly (no time-step bias).
"""

__version__ = "1.0.0"

from .chain import (ChainCapError, ChainPath, DegeneratePathError,
                    sample_chain_gaussian, sample_chain_gig,
                    malliavin_variance)
from .distributions import (GigParams, bessel_k_half, gig_density, gig_moment,
                            gig_inverse_moment, gig_sample, hermite_h,
                            levy_cdf, levy_density, levy_sample,
                            normal_sample, symmetric_exponential_density,
                            symmetric_exponential_sample)
from .estimators import (ConfigError, EstimatorFault, ExperimentConfig,
                         McStatistics, TestFunction,
                         derivative_contribution, representation_contribution,
                         run_estimator, test_function_preset,
                         time_functional_contribution)
from .model import (DiffusionModel, ModelError, ValidationReport,
                    constant_model, model_preset, tanh_model,
                    validate_assumptions)
from .oracle import (OracleError, QuadratureSpec, QuadratureDepthError,
                     adaptive_simpson, drifted_hitting_density,
                     euler_bridge_estimate, functional_by_quadrature,
                     levy_hitting_density)
from .rng import RngStream
from .weights import (WeightSet, assemble_weights, canonical_integral,
                      i_hat_last, theta_hat, theta_i, time_dual_general,
                      time_dual_theta)

__all__ = [name for name in dir() if not name.startswith("_")]
