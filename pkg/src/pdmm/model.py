"""Poisson intensity model, likelihood and problem generators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .linops import DenseOperator, MaskedDftOperator, SensingOperator

__all__ = [
    "PoissonProblem",
    "GroundTruth",
    "forward_intensity",
    "sample_measurements",
    "neg_log_likelihood",
    "wirtinger_gradient",
    "random_signal",
    "make_random_operator",
    "make_masked_dft_operator",
    "normalize_operator",
]


@dataclass(frozen=True)
class PoissonProblem:
    """Counts ``y`` observed through ``op`` with known background ``b``."""

    op: SensingOperator
    y: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        b = np.broadcast_to(np.asarray(self.b, dtype=float), y.shape).copy()
        if y.shape != (self.op.rows,):
            raise ValueError(f"y has shape {y.shape}, operator has {self.op.rows} rows")
        if np.any(y < 0) or np.any(b < 0):
            raise ValueError("counts and background must be non-negative")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class GroundTruth:
    """Reference signal and the photon scale used to simulate counts.

    The simulated mean intensity is ``photon_scale * |A x_true|^2 + b``, which
    is the model ``|A signal|^2 + b`` with ``signal = sqrt(photon_scale) x_true``.
    """

    x_true: np.ndarray
    photon_scale: float = 1.0

    @property
    def signal(self) -> np.ndarray:
        return np.sqrt(self.photon_scale) * self.x_true


def forward_intensity(op: SensingOperator, x, b) -> np.ndarray:
    """Noise-free intensities ``|Ax|^2 + b``."""
    ax = op.apply(x)
    return np.abs(ax) ** 2 + np.asarray(b, dtype=float)


def sample_measurements(op, x_true, b, rng: np.random.Generator, photon_scale: float = 1.0):
    """Draw independent Poisson counts with means ``photon_scale |A x|^2 + b``."""
    b = np.broadcast_to(np.asarray(b, dtype=float), (op.rows,))
    mean = photon_scale * np.abs(op.apply(x_true)) ** 2 + b
    y = rng.poisson(mean).astype(float)
    return PoissonProblem(op, y, b)


def _intensity_terms(y, v):
    """Elementwise ``v - y log v`` with ``0 log 0 = 0``; inf where y > 0 = v."""
    with np.errstate(divide="ignore"):
        return v - xlogy(y, v)


def neg_log_likelihood(problem: PoissonProblem, x) -> float:
    """Poisson negative log-likelihood, up to the constant ``sum log(y_i!)``.

    Returns ``inf`` when some coordinate has positive counts and zero intensity.
    """
    v = forward_intensity(problem.op, x, problem.b)
    return float(np.sum(_intensity_terms(problem.y, v)))


def nll_from_intensity(y, v) -> float:
    return float(np.sum(_intensity_terms(y, v)))


def wirtinger_gradient(problem: PoissonProblem, x) -> np.ndarray:
    """Gradient ``2 A^H[(1 - y/v) * Ax]``.

    Real part and imaginary part are the partial derivatives of the
    likelihood with respect to ``Re x`` and ``Im x``.
    """
    ax = problem.op.apply(x)
    v = np.abs(ax) ** 2 + problem.b
    bad = np.flatnonzero((v == 0) & (problem.y > 0))
    if bad.size:
        raise ZeroDivisionError(f"zero intensity with positive counts at indices {bad.tolist()}")
    ratio = np.divide(problem.y, v, out=np.zeros_like(v), where=v > 0)
    return 2.0 * problem.op.adjoint((1.0 - ratio) * ax)


def random_signal(k: int, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian signal of unit Euclidean norm."""
    x = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    return x / np.linalg.norm(x)


def make_random_operator(n: int, k: int, rng: np.random.Generator, **kwargs) -> DenseOperator:
    """Dense operator with real and imaginary parts iid ``Uniform(0, 1)``."""
    if not n > k >= 1:
        raise ValueError(f"need N > K >= 1, got N={n}, K={k}")
    a = rng.uniform(0.0, 1.0, (n, k)) + 1j * rng.uniform(0.0, 1.0, (n, k))
    return DenseOperator(a, **kwargs)


def make_masked_dft_operator(shape, n_masks: int, rng: np.random.Generator) -> MaskedDftOperator:
    """Masked DFT operator with ``n_masks`` binary masks.

    The first mask is all ones; the others sample each entry with
    probability 0.5.  ``shape`` is ``K`` for 1-D signals or ``(K1, K2)`` for
    images.
    """
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    if min(shape) < 2 or n_masks < 1:
        raise ValueError("need signal side >= 2 and at least one mask")
    masks = np.empty((n_masks,) + shape)
    masks[0] = 1.0
    masks[1:] = rng.random((n_masks - 1,) + shape) < 0.5
    return MaskedDftOperator(masks)


def normalize_operator(op: SensingOperator, x_ref) -> SensingOperator:
    """Rescale ``op`` so that the mean of ``|a_i^H x_ref|^2`` equals one."""
    level = np.mean(np.abs(op.apply(x_ref)) ** 2)
    if level == 0:
        raise ValueError("reference signal lies in the null space of the operator")
    return op.scaled(1.0 / np.sqrt(level))
