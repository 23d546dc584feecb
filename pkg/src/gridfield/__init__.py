"""Exact and asymptotic likelihood computations for Matérn-3/2 tensor-product
Gaussian fields observed on a regular lattice."""

from .estimation import (EmptySieveError, EstimationResult, Sieve, build_sieve, estimate_phi,
                         kl_diagnostics, sieve_mle)
from .kernel import GridSpec, ModelParams, ScalarContext, corr_matrix, covariance_entry
from .likelihood import LatticeField, fisher_asymptotic, fisher_trace_exact, loglik, loglik_parts
from .sampling import SeededStream, sample_field
from .structured_linalg import (SignedLog, cofactor_closed, inverse_entry, inverse_matrix,
                                logdet_closed, logdet_recurrence)

__version__ = "0.1.0"
