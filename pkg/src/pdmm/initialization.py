"""Spectral initialization of the signal and closed-form dual initialization."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linops import PowerResult, power_iteration
from .model import PoissonProblem

__all__ = [
    "InitResult",
    "spectral_initialize",
    "scale_factor",
    "dual_initialize",
    "initialize",
]


@dataclass
class InitResult:
    x0: np.ndarray
    alpha: float
    z0: np.ndarray
    power_iters_used: int
    eigenvalue: float


def spectral_initialize(
    problem: PoissonProblem, tol: float = 1e-8, max_iters: int = 5000, seed: int = 0
) -> PowerResult:
    """Leading eigenvector of ``A^H diag(y - b) A`` by power iteration.

    Negative entries of ``y - b`` are kept, so the matrix may be indefinite;
    the iteration then converges to the eigenvalue of largest magnitude.  A
    warning is emitted if that eigenvalue is negative or if the iteration
    does not converge.
    """
    op = problem.op
    weights = problem.y - problem.b
    res = power_iteration(
        lambda v: op.adjoint(weights * op.apply(v)), op.cols, tol=tol, max_iters=max_iters, seed=seed
    )
    if not res.converged:
        warnings.warn("spectral power iteration hit max_iters", RuntimeWarning)
    if res.value < 0:
        warnings.warn("dominant spectral eigenvalue is negative", RuntimeWarning)
    return res


def scale_factor(problem: PoissonProblem, x_tilde) -> float:
    """Least-squares scale ``alpha`` minimizing ``||y - b - |alpha A x||^2``."""
    q = np.abs(problem.op.apply(x_tilde)) ** 2
    denom = np.sqrt(np.sum(q**2))
    if denom == 0:
        raise ValueError("A x_tilde is zero")
    num = float(np.dot(problem.y - problem.b, q))
    if num < 0:
        warnings.warn("negative correlation between y - b and |A x|^2, scale clamped to 0", RuntimeWarning)
        num = 0.0
    return float(np.sqrt(num) / denom)


def dual_initialize(problem: PoissonProblem, x0, z_floor: float = 1e-12) -> np.ndarray:
    """``z_i = y_i / (|a_i^H x0|^2 + b_i)``, floored at ``z_floor``."""
    v = np.abs(problem.op.apply(x0)) ** 2 + problem.b
    y = problem.y
    bad = np.flatnonzero((v == 0) & (y > 0))
    if bad.size:
        raise ZeroDivisionError(f"zero intensity with positive counts at indices {bad.tolist()}")
    z = np.divide(y, v, out=np.zeros_like(v), where=v > 0)
    return np.maximum(z, z_floor)


def initialize(
    problem: PoissonProblem,
    tol: float = 1e-8,
    max_iters: int = 5000,
    seed: int = 0,
    z_floor: float = 1e-12,
) -> InitResult:
    """Spectral direction, least-squares scale and the matching dual vector."""
    res = spectral_initialize(problem, tol=tol, max_iters=max_iters, seed=seed)
    alpha = scale_factor(problem, res.vector)
    x0 = alpha * res.vector
    if alpha == 0:
        # a zero start is a fixed point of the primal update; keep the direction
        x0 = res.vector
    z0 = dual_initialize(problem, x0, z_floor=z_floor)
    return InitResult(x0, alpha, z0, res.iterations, res.value)
