"""Primal-dual majorization-minimization for Poisson phase retrieval.

The outer loop linearizes the concave part of the saddle formulation at the
current iterate ``x_t`` (``d = A x_t``).  The resulting convex-concave problem
is solved through its dual in ``z`` with an inner MM loop whose steps have a
closed form; the primal update is then a single pseudo-inverse application,
``x_{t+1} = A^+(d * z)``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import xlogy

from .linops import SensingOperator
from .model import PoissonProblem, nll_from_intensity

__all__ = [
    "SolverConfig",
    "SolveTrace",
    "InnerResult",
    "MonotonicityError",
    "dual_linearization_vector",
    "dual_step",
    "dual_objective",
    "inner_solve_dual",
    "primal_step",
    "primal_surrogate_value",
    "saddle_objective",
    "solve",
]


class MonotonicityError(RuntimeError):
    """The objective increased between outer iterations beyond the slack."""


@dataclass
class SolverConfig:
    """Stopping rules and numerical guards.

    ``eta_outer`` and ``eta_inner`` bound the relative change of ``x`` and
    ``z``.  With ``adaptive_inner`` the inner loop exits as soon as the
    candidate primal point decreases the objective.
    """

    eta_outer: float = 1e-6
    eta_inner: float = 1e-6
    max_outer: int = 1000
    max_inner: int = 100
    adaptive_inner: bool = True
    z_floor: float = 1e-12
    denom_guard: float = 1e-12
    curvature: str = "eig"
    monotone_slack: float = 1e-9
    # adaptive mode keeps iterating the dual past max_inner, up to this many
    # times max_inner, while the candidate fails to descend
    descent_extension: int = 10
    keep_iterates: bool = False

    def __post_init__(self):
        for name in ("eta_outer", "eta_inner", "z_floor", "denom_guard", "monotone_slack"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_outer", "max_inner", "descent_extension"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.curvature not in ("eig", "trace"):
            raise ValueError("curvature must be 'eig' or 'trace'")


@dataclass
class SolveTrace:
    """Per outer iteration history.  Entry 0 describes the starting point."""

    objective: list = field(default_factory=list)
    rel_change: list = field(default_factory=list)
    inner_iters: list = field(default_factory=list)
    time: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    guard_fallbacks: int = 0
    status: str = "running"

    @property
    def outer_iters(self) -> int:
        return len(self.objective) - 1

    @property
    def total_inner(self) -> int:
        return int(sum(self.inner_iters))

    def record(self, obj, rel, inner, t, x=None):
        self.objective.append(float(obj))
        self.rel_change.append(float(rel))
        self.inner_iters.append(int(inner))
        self.time.append(float(t))
        if x is not None:
            self.iterates.append(np.array(x, copy=True))


def dual_linearization_vector(op: SensingOperator, d, z) -> np.ndarray:
    """Gradient of the concave dual term, ``2 Re(conj(d) * ((P - I)(d z)))``."""
    dz = d * z
    return 2.0 * np.real(np.conj(d) * (op.projection_apply(dz) - dz))


def _z_update(y, b, lin, h, z_floor, denom_guard):
    """Minimize ``lin z + h z^2 + b z - y log z - h z`` over ``z >= 0``.

    Returns the minimizer and the number of coordinates that used the
    ``denom_guard`` fallback (``h = 0`` and ``b + lin <= denom_guard``).
    """
    y = np.asarray(y, dtype=float)
    h = np.asarray(h, dtype=float)
    beta = b + lin - h
    root = np.sqrt(beta * beta + 8.0 * h * y)
    with np.errstate(divide="ignore", invalid="ignore"):
        # rationalized root avoids cancellation when beta > 0
        z = np.where(beta > 0, 2.0 * y / (beta + root), (root - beta) / (4.0 * h))
    n_guard = 0
    lin_only = h == 0
    if lin_only.any():
        beta, y = np.broadcast_arrays(beta, y)
        lin_only = np.broadcast_to(lin_only, z.shape)
        ok = lin_only & (beta > denom_guard)
        guarded = lin_only & ~ok
        z[ok] = y[ok] / beta[ok]
        z[guarded] = y[guarded] / denom_guard
        n_guard = int(np.count_nonzero(guarded & (y > 0)))
    z = np.maximum(z, np.where(y > 0, z_floor, 0.0))
    return z, n_guard


def dual_step(y, b, c, h, z_floor: float = 1e-12, denom_guard: float = 1e-12) -> np.ndarray:
    """Closed-form minimizer of ``c z + h z^2 + b z - y log z - h z`` (elementwise)."""
    return _z_update(y, b, c, h, z_floor, denom_guard)[0]


def dual_objective(op: SensingOperator, d, z, y, b) -> float:
    """Dual objective ``z^T D^H P D z + b^T z - y^T log z - |d|^2^T z``."""
    dz = d * z
    quad = np.real(np.vdot(dz, op.projection_apply(dz)))
    with np.errstate(divide="ignore"):
        logs = xlogy(y, z)
    return float(quad + np.dot(b, z) - np.sum(logs) - np.dot(np.abs(d) ** 2, z))


def primal_step(op: SensingOperator, d, z) -> np.ndarray:
    """``x = A^+(d * z)``."""
    return op.pinv_apply(d * z)


def saddle_objective(problem: PoissonProblem, x, z) -> float:
    """Saddle function whose maximum over ``z >= 0`` is the likelihood.

    ``sum[v + y log z - z v] + sum[y - y log y]`` with ``v = |Ax|^2 + b``.  The
    trailing constant makes the maximum equal to the likelihood exactly.
    """
    y = problem.y
    v = np.abs(problem.op.apply(x)) ** 2 + problem.b
    with np.errstate(divide="ignore"):
        ylogz = xlogy(y, z)
    return float(np.sum(v + ylogz - z * v) + np.sum(y - xlogy(y, y)))


def primal_surrogate_value(problem: PoissonProblem, x, x_t) -> float:
    """Primal majorizer of the likelihood at anchor ``x_t``, evaluated at ``x``.

    Obtained by maximizing the linearized saddle function over ``z`` in
    closed form.  Constants are included so the value equals the likelihood
    at ``x = x_t``.  Returns ``inf`` outside the region where every
    ``b_i - |d_i|^2 + 2 Re(conj(d_i) a_i^H x)`` is positive.
    """
    op, y, b = problem.op, problem.y, problem.b
    d = op.apply(x_t)
    ax = op.apply(x)
    cross = np.real(np.conj(d) * ax)
    den = b - np.abs(d) ** 2 + 2.0 * cross
    if np.any(den <= 0):
        return np.inf
    ratio = y / den
    val = (
        np.real(np.vdot(ax, ax))
        - np.sum(b * ratio)
        + np.sum(xlogy(y, ratio))
        - 2.0 * np.sum(ratio * cross)
        + np.sum(ratio * np.abs(d) ** 2)
    )
    return float(val + np.sum(b + y - xlogy(y, y)))


@dataclass
class InnerResult:
    z: np.ndarray
    iterations: int
    x: np.ndarray
    ax: np.ndarray
    objective: float
    guard_fallbacks: int


def inner_solve_dual(
    op: SensingOperator,
    problem: PoissonProblem,
    d,
    z,
    config: SolverConfig,
    f_t: Optional[float] = None,
) -> InnerResult:
    """Inner MM loop over the dual variable for a fixed anchor ``d = A x_t``.

    The candidate primal point ``A^+(d z)`` is maintained alongside ``z``;
    since ``P(d z) = A A^+(d z)`` the linearization vector reuses it.  When
    ``config.adaptive_inner`` is set and ``f_t`` is given, the loop stops as
    soon as the candidate does not increase the objective above ``f_t``.
    """
    y, b = problem.y, problem.b
    h = np.abs(d) ** 2
    x = op.pinv_apply(d * z)
    ax = op.apply(x)
    adaptive = config.adaptive_inner and f_t is not None
    cap = config.max_inner * (config.descent_extension if adaptive else 1)
    slack = config.monotone_slack * (1.0 + abs(f_t)) if f_t is not None and np.isfinite(f_t) else 0.0
    flags = 0
    f_cand = np.nan
    k = 0
    while k < cap:
        k += 1
        dz = d * z
        c = 2.0 * np.real(np.conj(d) * (ax - dz))
        z_new, nflag = _z_update(y, b, c, h, config.z_floor, config.denom_guard)
        flags += nflag
        x = op.pinv_apply(d * z_new)
        ax = op.apply(x)
        nz = np.linalg.norm(z)
        rel = np.linalg.norm(z_new - z) / (nz if nz > 0 else 1.0)
        z = z_new
        if adaptive:
            f_cand = nll_from_intensity(y, np.abs(ax) ** 2 + b)
            if f_cand <= f_t:
                break
            if rel < config.eta_inner and f_cand <= f_t + slack:
                break
            if k >= config.max_inner and f_cand <= f_t + slack:
                break
        elif rel < config.eta_inner:
            break
    if np.isnan(f_cand):
        f_cand = nll_from_intensity(y, np.abs(ax) ** 2 + b)
    return InnerResult(z, k, x, ax, f_cand, flags)


def _rel_change(new, old):
    n = np.linalg.norm(old)
    return float(np.linalg.norm(new - old) / (n if n > 0 else 1.0))


def _finish_status(trace: SolveTrace, config: SolverConfig, converged: bool):
    if converged:
        trace.status = "converged"
    elif trace.rel_change and trace.rel_change[-1] < 10 * config.eta_outer:
        trace.status = "max_outer"
    else:
        trace.status = "stalled"


def solve(problem: PoissonProblem, x0, z0, config: Optional[SolverConfig] = None):
    """Run PDMM from ``(x0, z0)``.

    Returns
    -------
    x : ndarray
        Final iterate.
    trace : SolveTrace
        Objective, relative change, inner iterations and elapsed time per
        outer iteration.

    Raises
    ------
    MonotonicityError
        If an outer step increases the likelihood by more than
        ``monotone_slack * (1 + |f|)``.
    """
    config = config or SolverConfig()
    op, y, b = problem.op, problem.y, problem.b
    x = np.asarray(x0, dtype=complex).copy()
    z = np.asarray(z0, dtype=float).copy()
    ax = op.apply(x)
    f = nll_from_intensity(y, np.abs(ax) ** 2 + b)

    trace = SolveTrace()
    start = time.perf_counter()
    trace.record(f, np.nan, 0, 0.0, x if config.keep_iterates else None)
    converged = False
    for t in range(1, config.max_outer + 1):
        inner = inner_solve_dual(op, problem, ax, z, config, f_t=f)
        trace.guard_fallbacks += inner.guard_fallbacks
        f_new = inner.objective
        if f_new > f + config.monotone_slack * (1.0 + abs(f)):
            raise MonotonicityError(
                f"objective increased at outer iteration {t}: {f!r} -> {f_new!r}"
            )
        rel = _rel_change(inner.x, x)
        x, ax, z, f = inner.x, inner.ax, inner.z, f_new
        trace.record(f, rel, inner.iterations, time.perf_counter() - start,
                     x if config.keep_iterates else None)
        if rel < config.eta_outer:
            converged = True
            break
    _finish_status(trace, config, converged)
    return x, trace
