"""Primal-dual majorization-minimization for Poisson phase retrieval."""

from .initialization import InitResult, initialize
from .linops import DenseOperator, MaskedDftOperator, RankDeficientError
from .metrics import MetricReport, autocorr_mse, evaluate, nrmse
from .model import (
    GroundTruth,
    PoissonProblem,
    make_masked_dft_operator,
    make_random_operator,
    neg_log_likelihood,
    normalize_operator,
    random_signal,
    sample_measurements,
    wirtinger_gradient,
)
from .regularized import build_regularizer, precompute, solve_regularized
from .solver import MonotonicityError, SolverConfig, SolveTrace, solve

__version__ = "0.1.0"

__all__ = [
    "DenseOperator",
    "MaskedDftOperator",
    "RankDeficientError",
    "PoissonProblem",
    "GroundTruth",
    "sample_measurements",
    "neg_log_likelihood",
    "wirtinger_gradient",
    "random_signal",
    "make_random_operator",
    "make_masked_dft_operator",
    "normalize_operator",
    "InitResult",
    "initialize",
    "SolverConfig",
    "SolveTrace",
    "MonotonicityError",
    "solve",
    "build_regularizer",
    "precompute",
    "solve_regularized",
    "MetricReport",
    "nrmse",
    "autocorr_mse",
    "evaluate",
]
