"""Sensing operators for phase retrieval.

Two backends are provided:

* :class:`DenseOperator` wraps an explicit complex ``N x K`` matrix and caches
  a factorization of the Gram matrix ``A^H A``.
* :class:`MaskedDftOperator` applies ``M`` masks followed by a zero-padded,
  unnormalized DFT.  Its Gram matrix is diagonal, so Gram solves and
  pseudo-inverse applications cost a handful of FFTs.

Both expose the same surface: ``apply``, ``adjoint``, ``gram_solve``,
``pinv_apply``, ``projection_apply`` and ``scaled``.  Operators are immutable
after construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.linalg

__all__ = [
    "RankDeficientError",
    "DenseOperator",
    "MaskedDftOperator",
    "SensingOperator",
    "PowerResult",
    "power_iteration",
    "max_eig_hermitian",
    "apply",
    "adjoint_apply",
    "pinv_apply",
    "projection_apply",
    "gram_solve",
]


class RankDeficientError(ValueError):
    """Raised when an operator does not have full column rank."""


def _check_length(v: np.ndarray, n: int, what: str) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != n:
        raise ValueError(f"{what}: expected leading dimension {n}, got {v.shape[0]}")
    return v


class DenseOperator:
    """Explicit complex measurement matrix.

    Parameters
    ----------
    entries : array_like, shape (N, K)
        Measurement matrix. Rows are the measurement vectors ``a_i^H``.
    scale : float
        Global positive factor applied on top of ``entries``.
    projection_cap : int
        The ``N x N`` projection matrix is materialized only when
        ``N <= projection_cap``.
    """

    def __init__(self, entries, scale: float = 1.0, projection_cap: int = 4096, _cache=None):
        entries = np.asarray(entries, dtype=complex)
        if entries.ndim != 2 or min(entries.shape) < 1:
            raise ValueError("entries must be a non-empty 2-D matrix")
        if not scale > 0:
            raise ValueError("scale must be positive")
        self.entries = entries
        self.scale = float(scale)
        self.projection_cap = projection_cap
        self.shape = entries.shape
        if _cache is not None:
            self._factor, self._proj = _cache
            return
        self._factor = self._factorize(entries)
        self._proj = None
        if self.shape[0] <= projection_cap:
            # P = A (A^H A)^{-1} A^H is invariant to the global scale.
            m = self.entries @ self._solve_unscaled(self.entries.conj().T)
            self._proj = 0.5 * (m + m.conj().T)

    @staticmethod
    def _factorize(a: np.ndarray):
        n, k = a.shape
        if n < k:
            raise RankDeficientError(f"{n} x {k} matrix cannot have full column rank")
        gram = a.conj().T @ a
        try:
            c, lower = scipy.linalg.cho_factor(gram, lower=True)
            d = np.abs(np.diag(c))
            if d.min() > np.sqrt(k * np.finfo(float).eps) * d.max():
                return ("chol", (c, lower))
        except np.linalg.LinAlgError:
            pass
        # Cholesky failed or is badly conditioned: pivoted QR of A itself.
        q, r, piv = scipy.linalg.qr(a, mode="economic", pivoting=True)
        rd = np.abs(np.diag(r))
        if rd.min() <= max(n, k) * np.finfo(float).eps * rd.max():
            raise RankDeficientError("measurement matrix is rank deficient")
        return ("qr", (r, piv))

    def _solve_unscaled(self, v: np.ndarray) -> np.ndarray:
        kind, data = self._factor
        if kind == "chol":
            return scipy.linalg.cho_solve(data, v)
        r, piv = data
        # A[:, piv] = Q R  =>  (A^H A)^{-1} = Pi R^{-1} R^{-H} Pi^T
        t = scipy.linalg.solve_triangular(r, v[piv], trans="C")
        t = scipy.linalg.solve_triangular(r, t)
        out = np.empty_like(t)
        out[piv] = t
        return out

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    def scaled(self, factor: float) -> "DenseOperator":
        """Return a copy whose scale is multiplied by ``factor``."""
        return DenseOperator(
            self.entries, self.scale * factor, self.projection_cap, (self._factor, self._proj)
        )

    def apply(self, x):
        x = _check_length(x, self.cols, "apply")
        return self.scale * (self.entries @ x)

    def adjoint(self, v):
        v = _check_length(v, self.rows, "adjoint")
        return self.scale * (self.entries.conj().T @ v)

    def gram_solve(self, v):
        v = _check_length(v, self.cols, "gram_solve")
        return self._solve_unscaled(np.asarray(v, dtype=complex)) / self.scale**2

    def pinv_apply(self, v):
        v = _check_length(v, self.rows, "pinv_apply")
        return self._solve_unscaled(self.entries.conj().T @ v) / self.scale

    def projection_apply(self, v):
        v = _check_length(v, self.rows, "projection_apply")
        if self._proj is not None:
            return self._proj @ v
        return self.apply(self.pinv_apply(v))

    def to_dense(self) -> np.ndarray:
        return self.scale * self.entries


class MaskedDftOperator:
    """Masked, zero-padded DFT measurements.

    For a signal ``x`` of shape ``signal_shape`` (1-D length ``K`` or a 2-D
    ``K1 x K2`` image flattened column-major), mask ``m`` produces the
    unnormalized DFT of ``masks[m] * x`` zero-padded to ``2K - 1`` along every
    axis.  Outputs of all masks are concatenated, each flattened column-major.

    Parameters
    ----------
    masks : array_like, shape (M, *signal_shape)
        Mask values; ``masks[0]`` is normally all ones.
    scale : float
        Global positive factor.
    """

    def __init__(self, masks, scale: float = 1.0):
        masks = np.asarray(masks)
        if masks.ndim < 2:
            raise ValueError("masks must have shape (M, *signal_shape)")
        if not scale > 0:
            raise ValueError("scale must be positive")
        self.masks = masks
        self.scale = float(scale)
        self.signal_shape = masks.shape[1:]
        self.pad_shape = tuple(2 * k - 1 for k in self.signal_shape)
        self.n_masks = masks.shape[0]
        self.n_per_mask = int(np.prod(self.pad_shape))
        self.shape = (self.n_masks * self.n_per_mask, int(np.prod(self.signal_shape)))
        self._axes = tuple(range(1, len(self.signal_shape) + 1))
        self._mask_power = np.sum(np.abs(masks) ** 2, axis=0)
        if np.any(self._mask_power == 0):
            raise RankDeficientError("some signal entries are not covered by any mask")

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    def scaled(self, factor: float) -> "MaskedDftOperator":
        return MaskedDftOperator(self.masks, self.scale * factor)

    def _to_grid(self, x):
        return np.reshape(x, self.signal_shape, order="F")

    def _stack_to_vec(self, arr):
        # column-major flattening of each mask's block
        rev = (0,) + tuple(reversed(self._axes))
        return np.transpose(arr, rev).reshape(-1)

    def _vec_to_stack(self, v):
        rev_shape = (self.n_masks,) + tuple(reversed(self.pad_shape))
        arr = np.reshape(v, rev_shape)
        return np.transpose(arr, (0,) + tuple(reversed(self._axes)))

    def gram_diag(self) -> np.ndarray:
        """Diagonal of ``A^H A`` (column-major flattened)."""
        return (self.scale**2 * self.n_per_mask) * self._mask_power.reshape(-1, order="F")

    def apply(self, x):
        x = _check_length(x, self.cols, "apply")
        grid = self._to_grid(x)
        spec = np.fft.fftn(self.masks * grid[None], s=self.pad_shape, axes=self._axes)
        return self.scale * self._stack_to_vec(spec)

    def adjoint(self, v):
        v = _check_length(v, self.rows, "adjoint")
        stack = self._vec_to_stack(v)
        # F^H v = n * ifft(v), then keep the unpadded support
        back = np.fft.ifftn(stack, axes=self._axes) * self.n_per_mask
        back = back[(slice(None),) + tuple(slice(0, k) for k in self.signal_shape)]
        out = np.sum(np.conj(self.masks) * back, axis=0)
        return self.scale * out.reshape(-1, order="F")

    def gram_solve(self, v):
        v = _check_length(v, self.cols, "gram_solve")
        diag = self.gram_diag()
        if v.ndim > 1:
            diag = diag.reshape((-1,) + (1,) * (v.ndim - 1))
        return v / diag

    def pinv_apply(self, v):
        return self.gram_solve(self.adjoint(v))

    def projection_apply(self, v):
        return self.apply(self.pinv_apply(v))

    def to_dense(self) -> np.ndarray:
        """Materialize the matrix column by column (small problems only)."""
        eye = np.eye(self.cols, dtype=complex)
        return np.stack([self.apply(e) for e in eye], axis=1)


SensingOperator = Union[DenseOperator, MaskedDftOperator]


# Functional spelling of the operator methods.
def apply(op: SensingOperator, x):
    return op.apply(x)


def adjoint_apply(op: SensingOperator, v):
    return op.adjoint(v)


def pinv_apply(op: SensingOperator, v):
    return op.pinv_apply(v)


def projection_apply(op: SensingOperator, v):
    return op.projection_apply(v)


def gram_solve(op: SensingOperator, v):
    return op.gram_solve(v)


@dataclass
class PowerResult:
    """Outcome of a power iteration.

    ``value`` is the final Rayleigh quotient, ``vector`` the unit-norm
    iterate.  ``converged`` is False when ``max_iters`` was exhausted.
    """

    value: float
    vector: np.ndarray
    iterations: int
    converged: bool


def _start_vector(dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = np.ones(dim, dtype=complex) + 0.1 * (rng.standard_normal(dim) + 1j * rng.standard_normal(dim))
    return v / np.linalg.norm(v)


def power_iteration(
    apply_fn: Callable[[np.ndarray], np.ndarray],
    dim: int,
    tol: float = 1e-8,
    max_iters: int = 5000,
    seed: int = 0,
) -> PowerResult:
    """Power iteration for a Hermitian operator.

    Targets the eigenvalue of largest magnitude; the returned ``value`` is the
    (signed) Rayleigh quotient.  Stops when its relative change drops below
    ``tol``.
    """
    v = _start_vector(dim, seed)
    rho = np.inf
    for it in range(1, max_iters + 1):
        w = apply_fn(v)
        rho_new = float(np.real(np.vdot(v, w)))
        nw = np.linalg.norm(w)
        if nw == 0:
            return PowerResult(0.0, v, it, True)
        v = w / nw
        if abs(rho_new - rho) <= tol * abs(rho_new):
            return PowerResult(rho_new, v, it, True)
        rho = rho_new
    return PowerResult(rho, v, max_iters, False)


def max_eig_hermitian(
    apply_fn: Callable[[np.ndarray], np.ndarray],
    dim: int,
    tol: float = 1e-8,
    max_iters: int = 5000,
    seed: int = 0,
) -> float:
    """Largest eigenvalue of a Hermitian positive semi-definite operator.

    Emits a :class:`RuntimeWarning` and returns the best estimate when the
    iteration does not converge.
    """
    res = power_iteration(apply_fn, dim, tol=tol, max_iters=max_iters, seed=seed)
    if not res.converged:
        warnings.warn(f"power iteration did not converge in {max_iters} iterations", RuntimeWarning)
    return max(res.value, 0.0)
