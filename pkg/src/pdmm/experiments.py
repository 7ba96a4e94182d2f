"""Monte-Carlo experiment harness: instance generation, sweeps and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .initialization import initialize
from .metrics import align_phase, nrmse, nrmse_trace
from .model import (
    GroundTruth,
    make_masked_dft_operator,
    make_random_operator,
    normalize_operator,
    random_signal,
    sample_measurements,
)
from .pgm import read_image, write_image
from .regularized import build_regularizer, solve_regularized
from .solver import SolverConfig, solve

__all__ = [
    "SpecError",
    "ExperimentSpec",
    "ResultRow",
    "run_experiment",
    "summarize",
    "write_csv",
    "read_csv",
    "write_summary_csv",
    "synthetic_phantom",
]

MODES = ("single", "sweep-n", "sweep-k", "trace", "image-tv")
OPERATORS = ("random", "masked-dft")
REGS = ("none", "l1-identity", "tv")


class SpecError(ValueError):
    """Invalid experiment specification."""


def _increasing(values) -> bool:
    return len(values) > 0 and all(a < b for a, b in zip(values, values[1:]))


@dataclass
class ExperimentSpec:
    mode: str = "single"
    operator: str = "random"
    k: int = 20
    n: int = 800
    n_list: Sequence[int] = ()
    k_list: Sequence[int] = ()
    masks: int = 21
    b: float = 0.1
    lam: float = 8.0
    photon_scale: float = 1.0
    trials: int = 50
    seed: int = 0
    reg: str = "none"
    config: SolverConfig = field(default_factory=SolverConfig)
    out: Optional[Path] = None
    image: Optional[Path] = None
    side: int = 32
    wall_clock: bool = False

    def validate(self) -> None:
        if self.mode not in MODES:
            raise SpecError(f"mode must be one of {MODES}")
        if self.operator not in OPERATORS:
            raise SpecError(f"operator must be one of {OPERATORS}")
        if self.reg not in REGS:
            raise SpecError(f"reg must be one of {REGS}")
        if self.trials < 1:
            raise SpecError("trials must be at least 1")
        if self.mode == "sweep-n" and not _increasing(list(self.n_list)):
            raise SpecError("--n-list must be non-empty and strictly increasing")
        if self.mode == "sweep-k" and not _increasing(list(self.k_list)):
            raise SpecError("--k-list must be non-empty and strictly increasing")
        if self.masks < 1:
            raise SpecError("need at least one mask")
        if self.b < 0 or self.lam < 0 or not self.photon_scale > 0:
            raise SpecError("b and lambda must be >= 0 and photon scale > 0")
        if self.mode == "image-tv":
            if self.side < 2:
                raise SpecError("image side must be at least 2")
            return
        for k, n in self.points():
            if k < 2 if self.operator == "masked-dft" else k < 1:
                raise SpecError(f"signal length {k} too small")
            if self.operator == "random" and n <= k:
                raise SpecError(f"random operator needs N > K, got N={n}, K={k}")

    def points(self) -> List[tuple]:
        """``(K, N)`` for each sweep point; ``N`` is nominal for masked-DFT."""
        if self.mode == "sweep-n":
            return [(self.k, int(n)) for n in self.n_list]
        if self.mode == "sweep-k":
            return [(int(k), self.n) for k in self.k_list]
        if self.mode == "image-tv":
            return [(self.side * self.side, self.masks * (2 * self.side - 1) ** 2)]
        return [(self.k, self.n)]

    @property
    def effective_lam(self) -> float:
        return float(self.lam) if self.reg != "none" else 0.0

    @property
    def algorithm(self) -> str:
        return {"none": "pdmm", "l1-identity": "pdmm-l1", "tv": "pdmm-tv"}[self.reg]


@dataclass
class ResultRow:
    experiment: str
    trial_seed: int
    K: int
    N: int
    b: float
    lam: float
    algorithm: str
    nrmse: float
    objective: float
    outer_iters: int
    inner_iters: int
    wall_clock_s: float
    status: str


COLUMNS = [f.name for f in dataclasses.fields(ResultRow)]
_CASTS = {f.name: f.type for f in dataclasses.fields(ResultRow)}


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def write_csv(rows: Sequence[ResultRow], path) -> None:
    """Header plus one line per row; floats carry 12 significant digits."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, c)) for c in COLUMNS])


def read_csv(path) -> List[ResultRow]:
    casts = {"int": int, "float": float, "str": str}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [ResultRow(**{c: casts[_CASTS[c]](rec[c]) for c in COLUMNS}) for rec in reader]


SUMMARY_COLUMNS = [
    "K", "N", "b", "lambda", "algorithm", "trials", "n_ok",
    "nrmse_mean", "nrmse_stderr", "nrmse_median",
    "objective_mean", "outer_mean", "inner_mean", "wall_clock_mean",
]


def summarize(rows: Sequence[ResultRow]) -> List[dict]:
    """Mean, standard error and median per sweep point, over successful trials."""
    groups: dict = {}
    for row in rows:
        groups.setdefault((row.K, row.N, row.b, row.lam, row.algorithm), []).append(row)
    out = []
    for (k, n, b, lam, alg), grp in groups.items():
        ok = [r for r in grp if not r.status.startswith("failed")]
        vals = np.array([r.nrmse for r in ok])
        nan = float("nan")

        def mean(attr):
            return float(np.mean([getattr(r, attr) for r in ok])) if ok else nan

        out.append({
            "K": k, "N": n, "b": b, "lambda": lam, "algorithm": alg,
            "trials": len(grp), "n_ok": len(ok),
            "nrmse_mean": mean("nrmse"),
            "nrmse_stderr": float(np.std(vals, ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else nan,
            "nrmse_median": float(np.median(vals)) if ok else nan,
            "objective_mean": mean("objective"),
            "outer_mean": mean("outer_iters"),
            "inner_mean": mean("inner_iters"),
            "wall_clock_mean": mean("wall_clock_s"),
        })
    return out


def write_summary_csv(summary: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for rec in summary:
            writer.writerow([_fmt(rec[c]) for c in SUMMARY_COLUMNS])


def synthetic_phantom(side: int) -> np.ndarray:
    """Piecewise-constant test image with values in ``[0, 1]``."""
    yy, xx = np.mgrid[0:side, 0:side] / side
    img = np.full((side, side), 0.1)
    img[(xx > 0.15) & (xx < 0.55) & (yy > 0.2) & (yy < 0.8)] = 0.8
    img[(xx - 0.68) ** 2 + (yy - 0.45) ** 2 < 0.04] = 0.5
    return img


def _center_crop(img: np.ndarray, side: int) -> np.ndarray:
    h, w = img.shape
    if side > min(h, w):
        raise SpecError(f"image {h}x{w} is smaller than the requested side {side}")
    r, c = (h - side) // 2, (w - side) // 2
    return img[r : r + side, c : c + side]


def _stem(out) -> Path:
    out = Path(out)
    return out.with_suffix("") if out.suffix else out


def _regularizer(spec: ExperimentSpec, k: int, image: bool):
    if spec.reg == "none":
        return None
    if spec.reg == "l1-identity":
        return build_regularizer("identity", k, spec.lam)
    if image:
        return build_regularizer("tv2d", int(round(math.sqrt(k))), spec.lam)
    return build_regularizer("diff1d", k, spec.lam)


def _run_trial(spec, k, n, sweep_idx, trial_idx, image_ref):
    ss = np.random.SeedSequence([spec.seed, sweep_idx, trial_idx])
    trial_seed = int(ss.generate_state(1)[0])
    rng = np.random.default_rng(ss)
    if image_ref is not None:
        x_true = image_ref.reshape(-1, order="F").astype(complex)
        op = make_masked_dft_operator(image_ref.shape, spec.masks, rng)
        op = normalize_operator(op, x_true)
    elif spec.operator == "masked-dft":
        x_true = random_signal(k, rng)
        op = normalize_operator(make_masked_dft_operator(k, spec.masks, rng), x_true)
    else:
        op = make_random_operator(n, k, rng)
        x_true = random_signal(k, rng)
    truth = GroundTruth(x_true, spec.photon_scale)
    problem = sample_measurements(op, x_true, spec.b, rng, spec.photon_scale)
    init = initialize(problem, seed=trial_seed, z_floor=spec.config.z_floor)
    reg = _regularizer(spec, op.cols, image_ref is not None)
    start = time.perf_counter()
    if reg is None:
        x_opt, trace = solve(problem, init.x0, init.z0, spec.config)
    else:
        x_opt, trace = solve_regularized(problem, reg, init.x0, init.z0, config=spec.config, seed=trial_seed)
    elapsed = time.perf_counter() - start
    row = ResultRow(
        experiment=f"{spec.mode}-p{sweep_idx}-t{trial_idx}",
        trial_seed=trial_seed, K=k, N=op.rows, b=float(spec.b), lam=spec.effective_lam,
        algorithm=spec.algorithm,
        nrmse=nrmse(x_opt, truth.signal),
        objective=trace.objective[-1],
        outer_iters=trace.outer_iters,
        inner_iters=trace.total_inner,
        wall_clock_s=elapsed if spec.wall_clock else float("nan"),
        status=trace.status,
    )
    return row, x_opt, trace, truth


def _write_trace(path, trace, truth) -> None:
    errs = nrmse_trace(trace.iterates, truth.signal)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "time_s", "nrmse", "objective"])
        for i, (t, e, f) in enumerate(zip(trace.time, errs, trace.objective)):
            writer.writerow([i, _fmt(t), _fmt(e), _fmt(f)])


def _write_recovered(path, x_opt, truth, shape) -> None:
    aligned = x_opt * np.conj(align_phase(x_opt, truth.signal)) / math.sqrt(truth.photon_scale)
    write_image(path, np.clip(aligned.real.reshape(shape, order="F"), 0.0, 1.0))


def run_experiment(spec: ExperimentSpec) -> List[ResultRow]:
    """Run every (sweep point, trial) pair in order and return one row each.

    Each pair draws from its own substream seeded by ``(seed, sweep index,
    trial index)``.  Solver exceptions become rows with a ``failed`` status.
    Trace mode and image mode also write side files next to ``spec.out``.
    """
    spec.validate()
    image_ref = None
    if spec.mode == "image-tv":
        base = read_image(spec.image) if spec.image is not None else synthetic_phantom(spec.side)
        image_ref = _center_crop(base, spec.side)
    if spec.mode == "trace":
        spec = dataclasses.replace(spec, config=dataclasses.replace(spec.config, keep_iterates=True))
    stem = _stem(spec.out) if spec.out is not None else None

    rows = []
    for sweep_idx, (k, n) in enumerate(spec.points()):
        for trial_idx in range(spec.trials):
            try:
                row, x_opt, trace, truth = _run_trial(spec, k, n, sweep_idx, trial_idx, image_ref)
            except (ArithmeticError, RuntimeError, np.linalg.LinAlgError, ValueError) as exc:
                ss = np.random.SeedSequence([spec.seed, sweep_idx, trial_idx])
                nan = float("nan")
                rows.append(ResultRow(
                    f"{spec.mode}-p{sweep_idx}-t{trial_idx}", int(ss.generate_state(1)[0]),
                    k, n, float(spec.b), spec.effective_lam, spec.algorithm,
                    nan, nan, 0, 0, nan, f"failed:{type(exc).__name__}",
                ))
                continue
            rows.append(row)
            if stem is None:
                continue
            if spec.mode == "trace":
                _write_trace(f"{stem}_trace_{trial_idx:03d}.csv", trace, truth)
            elif spec.mode == "image-tv":
                _write_recovered(f"{stem}_recovered_{trial_idx:03d}.pgm", x_opt, truth, image_ref.shape)
    return rows
