"""Bayesian quadrature on unbounded domains with inflated random designs."""

from .bq import Design, QuadraturePosterior, bq_posterior, variance_crosscheck, worst_case_error
from .errors import BQError
from .kernels import MATERN32, RBF, Kernel, gram_matrix
from .measures import Gaussian, StudentT, build_embedding
from .sampling import Proposal, draw

__version__ = "0.1.0"

__all__ = [
    "BQError", "Design", "Gaussian", "Kernel", "MATERN32", "Proposal", "QuadraturePosterior", "RBF",
    "StudentT", "bq_posterior", "build_embedding", "draw", "gram_matrix", "variance_crosscheck",
    "worst_case_error",
]
