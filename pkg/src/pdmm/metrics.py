"""Recovery metrics that are blind to the trivial phase-retrieval ambiguities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "MetricReport",
    "align_phase",
    "nrmse",
    "autocorrelation",
    "autocorr_mse",
    "nrmse_trace",
    "evaluate",
]


@dataclass
class MetricReport:
    nrmse: float
    aligned_phase: complex
    autocorr_mse: Optional[float] = None


def align_phase(x_opt, x_true) -> complex:
    """Unit scalar ``s/|s|`` with ``s = x_true^H x_opt`` (1 when ``s = 0``)."""
    s = np.vdot(np.ravel(x_true), np.ravel(x_opt))
    return complex(s / abs(s)) if s != 0 else 1.0 + 0j


def nrmse(x_opt, x_true) -> float:
    """``||x_opt - x_true e^{i phi}|| / ||x_true||`` with the best global phase."""
    x_opt = np.ravel(x_opt)
    x_true = np.ravel(x_true)
    ref = np.linalg.norm(x_true)
    if ref == 0:
        raise ValueError("x_true is zero")
    return float(np.linalg.norm(x_opt - x_true * align_phase(x_opt, x_true)) / ref)


def autocorrelation(x, circular: bool = False) -> np.ndarray:
    """``r[tau] = sum_n x[n + tau] conj(x[n])`` along every axis of ``x``.

    The linear version zero-pads each axis of length ``K`` to ``2K - 1``, so
    negative lags appear wrapped at the end of the output.
    """
    x = np.asarray(x, dtype=complex)
    shape = x.shape if circular else tuple(2 * k - 1 for k in x.shape)
    axes = tuple(range(x.ndim))
    spec = np.fft.fftn(x, s=shape, axes=axes)
    return np.fft.ifftn(np.abs(spec) ** 2, axes=axes)


def autocorr_mse(x_opt, x_true, circular: bool = False) -> float:
    """Mean squared difference between the autocorrelations of two signals."""
    x_opt = np.asarray(x_opt)
    x_true = np.asarray(x_true)
    if x_opt.shape != x_true.shape:
        raise ValueError("signals must have the same shape")
    diff = autocorrelation(x_opt, circular) - autocorrelation(x_true, circular)
    return float(np.mean(np.abs(diff) ** 2))


def nrmse_trace(iterates, x_true) -> list:
    """NRMSE of every stored iterate, for error-versus-time curves."""
    return [nrmse(x, x_true) for x in iterates]


def evaluate(x_opt, x_true, signal_shape=None) -> MetricReport:
    """NRMSE, alignment phase and, if ``signal_shape`` is given, autocorrelation MSE."""
    report = MetricReport(nrmse(x_opt, x_true), align_phase(x_opt, x_true))
    if signal_shape is not None:
        a = np.reshape(x_opt, signal_shape, order="F")
        t = np.reshape(x_true, signal_shape, order="F")
        report.autocorr_mse = autocorr_mse(a, t)
    return report
