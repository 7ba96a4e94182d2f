"""PDMM for the l1-regularized problem ``f(x) + lam * ||T x||_1``.

The l1 term is written as ``max_{|w_l| <= 1} Re(w^H T x)``.  After the primal
minimization the dual problem in ``(z, w)`` is solved by alternating MM
steps: a shifted closed-form ``z`` update and a projected ``w`` update whose
curvature constant ``e`` upper-bounds the largest eigenvalue of
``X = T (A^H A)^{-1} T^H``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import xlogy

from .linops import SensingOperator, max_eig_hermitian
from .model import PoissonProblem, nll_from_intensity
from .solver import (
    MonotonicityError,
    SolverConfig,
    SolveTrace,
    _finish_status,
    _rel_change,
    _z_update,
)

__all__ = [
    "RegularizerMatrix",
    "RegPrecompute",
    "build_regularizer",
    "precompute",
    "reg_dual_step_z",
    "reg_dual_step_w",
    "reg_primal_step",
    "reg_objective",
    "reg_dual_objective",
    "solve_regularized",
]

KINDS = ("identity", "diff1d", "tv2d")


@dataclass(frozen=True)
class RegularizerMatrix:
    """Sparse analysis operator ``T`` (``L x K``) and weight ``lam``."""

    T: sp.csr_matrix
    kind: str
    lam: float

    @property
    def rows(self) -> int:
        return self.T.shape[0]


def _diff(n: int) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")


def build_regularizer(kind: str, size: int, lam: float) -> RegularizerMatrix:
    """Build ``T`` for ``kind`` in ``identity``, ``diff1d`` or ``tv2d``.

    For ``tv2d`` ``size`` is the side of a square image flattened
    column-major; rows hold horizontal differences first, then vertical.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if kind == "identity":
        T = sp.identity(size, format="csr")
    elif kind == "diff1d":
        T = _diff(size)
    elif kind == "tv2d":
        eye = sp.identity(size, format="csr")
        horiz = sp.kron(_diff(size), eye)
        vert = sp.kron(eye, _diff(size))
        T = sp.vstack([horiz, vert], format="csr")
    else:
        raise ValueError(f"unknown regularizer kind {kind!r}; choose from {KINDS}")
    return RegularizerMatrix(T.astype(float), kind, float(lam))


@dataclass
class RegPrecompute:
    """Quantities reused by every iteration.

    ``e`` is the curvature of the ``w`` majorizer and ``gram_inv_th`` the
    dense ``(A^H A)^{-1} T^H`` when it was cheap to store.
    """

    e: float
    mode: str
    gram_inv_th: Optional[np.ndarray] = None

    def solve_th(self, op: SensingOperator, reg: RegularizerMatrix, w):
        """``(A^H A)^{-1} T^H w``."""
        if self.gram_inv_th is not None:
            return self.gram_inv_th @ w
        return op.gram_solve(reg.T.T @ w)


def precompute(
    op: SensingOperator,
    reg: RegularizerMatrix,
    curvature: str = "eig",
    tol: float = 1e-10,
    max_iters: int = 20000,
    dense_limit: int = 4096,
) -> RegPrecompute:
    """Curvature ``e`` of ``X = T (A^H A)^{-1} T^H`` and cached maps.

    ``curvature="eig"`` uses power iteration for the largest eigenvalue,
    inflated by a relative margin of ``1e-6`` so that it stays an upper
    bound; ``curvature="trace"`` uses ``trace(X)``, a looser but
    iteration-free bound.
    """
    T = reg.T
    L, K = T.shape
    diag = op.gram_diag() if hasattr(op, "gram_diag") else None
    cached = None
    if diag is None and L <= dense_limit:
        cached = op.gram_solve(T.T.toarray().astype(complex))

    if curvature == "trace":
        if diag is not None:
            e = float(np.sum(T.multiply(T).multiply(1.0 / diag[None, :]).sum()))
        elif cached is not None:
            e = float(np.real(np.sum(T.toarray() * cached.T)))
        else:
            raise ValueError("trace curvature needs a diagonal Gram or a cacheable T")
    elif curvature == "eig":
        if cached is not None:
            fn = lambda v: T @ (cached @ v)
        else:
            fn = lambda v: T @ op.gram_solve(T.T @ v)
        e = max_eig_hermitian(fn, L, tol=tol, max_iters=max_iters) * (1.0 + 1e-6)
    else:
        raise ValueError("curvature must be 'eig' or 'trace'")
    if not e > 0:
        raise ValueError("regularizer curvature is zero")
    return RegPrecompute(e, curvature, cached)


def reg_dual_step_z(y, b, c, g, h, z_floor: float = 1e-12, denom_guard: float = 1e-12) -> np.ndarray:
    """Closed-form ``z`` update with the regularization shift ``g``."""
    return _z_update(y, b, np.asarray(c) - np.asarray(g), h, z_floor, denom_guard)[0]


def reg_dual_step_w(u) -> np.ndarray:
    """Project ``u`` entrywise onto the closed unit disk."""
    u = np.asarray(u, dtype=complex)
    mag = np.abs(u)
    return np.where(mag > 1.0, u / np.where(mag > 1.0, mag, 1.0), u)


def reg_primal_step(op: SensingOperator, d, z, T, lam: float, w) -> np.ndarray:
    """``x = A^+(d z) - (lam / 2) (A^H A)^{-1} T^H w``."""
    return op.gram_solve(op.adjoint(d * z) - 0.5 * lam * (T.T @ w))


def reg_objective(problem: PoissonProblem, reg: RegularizerMatrix, x) -> float:
    """``f(x) + lam ||T x||_1``."""
    ax = problem.op.apply(x)
    f = nll_from_intensity(problem.y, np.abs(ax) ** 2 + problem.b)
    return f + reg.lam * float(np.sum(np.abs(reg.T @ x)))


def reg_dual_objective(op: SensingOperator, reg: RegularizerMatrix, d, z, w, y, b) -> float:
    """Joint dual objective in ``(z, w)`` (to be minimized).

    ``||A^H D z - (lam/2) T^H w||^2_{(A^H A)^{-1}} - |d|^2^T z - y^T log z + b^T z``.
    """
    v = op.adjoint(d * z) - 0.5 * reg.lam * (reg.T.T @ w)
    quad = np.real(np.vdot(v, op.gram_solve(v)))
    with np.errstate(divide="ignore"):
        logs = xlogy(y, z)
    return float(quad - np.dot(np.abs(d) ** 2, z) - np.sum(logs) + np.dot(b, z))


def _random_unit_phases(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.exp(2j * np.pi * rng.random(n))


def solve_regularized(
    problem: PoissonProblem,
    reg: RegularizerMatrix,
    x0,
    z0,
    w0=None,
    config: Optional[SolverConfig] = None,
    pre: Optional[RegPrecompute] = None,
    seed: int = 0,
):
    """Run regularized PDMM; the trace records ``f(x) + lam ||T x||_1``.

    ``w0`` defaults to unit-magnitude entries with random phases.  With
    ``lam = 0`` the ``w`` variable is inert and the iterates coincide with
    :func:`pdmm.solver.solve`.
    """
    config = config or SolverConfig()
    op, y, b = problem.op, problem.y, problem.b
    T, lam = reg.T, reg.lam
    if T.shape[1] != op.cols:
        raise ValueError("regularizer and operator disagree on the signal length")
    if lam > 0 and pre is None:
        pre = precompute(op, reg, config.curvature)
    x = np.asarray(x0, dtype=complex).copy()
    z = np.asarray(z0, dtype=float).copy()
    w = _random_unit_phases(reg.rows, seed) if w0 is None else np.asarray(w0, dtype=complex).copy()
    if np.any(np.abs(w) > 1 + 1e-12):
        raise ValueError("w0 must lie in the unit disk")

    def phi_of(x_, ax_):
        return nll_from_intensity(y, np.abs(ax_) ** 2 + b) + lam * float(np.sum(np.abs(T @ x_)))

    def solve_th(w_):
        return pre.solve_th(op, reg, w_) if lam > 0 else np.zeros(op.cols, dtype=complex)

    ax = op.apply(x)
    phi = phi_of(x, ax)
    trace = SolveTrace()
    start = time.perf_counter()
    trace.record(phi, np.nan, 0, 0.0, x if config.keep_iterates else None)
    converged = False
    for t in range(1, config.max_outer + 1):
        d = ax
        h = np.abs(d) ** 2
        slack = config.monotone_slack * (1.0 + abs(phi))
        # candidate primal point for the current (z, w)
        xc = op.gram_solve(op.adjoint(d * z) - 0.5 * lam * (T.T @ w))
        axc = op.apply(xc)
        phi_c = np.nan
        adaptive = config.adaptive_inner
        cap = config.max_inner * (config.descent_extension if adaptive else 1)
        k = 0
        while k < cap:
            k += 1
            # c - g in one pass: A x(z, w) = P(d z) - (lam/2) A (A^H A)^{-1} T^H w
            lin = 2.0 * np.real(np.conj(d) * (axc - d * z))
            z_new, nflag = _z_update(y, b, lin, h, config.z_floor, config.denom_guard)
            trace.guard_fallbacks += nflag
            xc = op.gram_solve(op.adjoint(d * z_new) - 0.5 * lam * (T.T @ w))
            if lam > 0:
                u = w + (2.0 / (lam * pre.e)) * (T @ xc)
                w_new = reg_dual_step_w(u)
                xc = xc - 0.5 * lam * solve_th(w_new - w)
                w = w_new
            axc = op.apply(xc)
            nz = np.linalg.norm(z)
            rel_z = np.linalg.norm(z_new - z) / (nz if nz > 0 else 1.0)
            z = z_new
            if adaptive:
                phi_c = phi_of(xc, axc)
                if phi_c <= phi:
                    break
                if (rel_z < config.eta_inner or k >= config.max_inner) and phi_c <= phi + slack:
                    break
            elif rel_z < config.eta_inner:
                break
        if np.isnan(phi_c):
            phi_c = phi_of(xc, axc)
        if phi_c > phi + slack:
            raise MonotonicityError(f"objective increased at outer iteration {t}: {phi!r} -> {phi_c!r}")
        rel = _rel_change(xc, x)
        x, ax, phi = xc, axc, phi_c
        trace.record(phi, rel, k, time.perf_counter() - start, x if config.keep_iterates else None)
        if rel < config.eta_outer:
            converged = True
            break
    _finish_status(trace, config, converged)
    return x, trace
