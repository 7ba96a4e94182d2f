"""Command-line entry point for running experiments."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (
    ExperimentSpec,
    SpecError,
    run_experiment,
    summarize,
    write_csv,
    write_summary_csv,
)
from .pgm import PgmError
from .solver import SolverConfig

__all__ = ["build_parser", "spec_from_args", "main"]


def _int_list(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--k", type=int, default=20, help="signal length")
    common.add_argument("--n", type=int, default=800, help="number of measurements")
    common.add_argument("--n-list", type=_int_list, default=(), help="comma-separated N values")
    common.add_argument("--k-list", type=_int_list, default=(), help="comma-separated K values")
    common.add_argument("--masks", type=int, default=21, help="masked-DFT mask count")
    common.add_argument("--b", type=float, default=0.1, help="background level")
    common.add_argument("--lambda", dest="lam", type=float, default=8.0, help="regularization weight")
    common.add_argument("--photon-scale", type=float, default=1.0)
    common.add_argument("--trials", type=int, default=50)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--eta-outer", type=float, default=1e-6)
    common.add_argument("--eta-inner", type=float, default=1e-6)
    common.add_argument("--max-outer", type=int, default=1000)
    common.add_argument("--max-inner", type=int, default=100)
    common.add_argument("--adaptive-inner", action=argparse.BooleanOptionalAction, default=True)
    common.add_argument("--reg", choices=["none", "l1-identity", "tv"], default=None,
                        help="default: tv for image-tv, none otherwise")
    common.add_argument("--operator", choices=["random", "masked-dft"], default="random")
    common.add_argument("--curvature", choices=["eig", "trace"], default="eig")
    common.add_argument("--out", type=Path, default=Path("pdmm_results.csv"), help="results CSV")
    common.add_argument("--image", type=Path, default=None, help="PGM input for image-tv")
    common.add_argument("--side", type=int, default=32, help="center-crop side for image-tv")
    common.add_argument("--wall-clock", action="store_true",
                        help="record solver time in the results (output is then not reproducible)")

    parser = argparse.ArgumentParser(prog="pdmm", description="Poisson phase retrieval experiments")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode, text in [
        ("single", "one (K, N) point"),
        ("sweep-n", "vary N over --n-list"),
        ("sweep-k", "vary K over --k-list"),
        ("trace", "per-iteration traces for one point"),
        ("image-tv", "TV-regularized image recovery from masked DFT data"),
    ]:
        sub.add_parser(mode, parents=[common], help=text)
    return parser


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    reg = args.reg or ("tv" if args.mode == "image-tv" else "none")
    config = SolverConfig(
        eta_outer=args.eta_outer,
        eta_inner=args.eta_inner,
        max_outer=args.max_outer,
        max_inner=args.max_inner,
        adaptive_inner=args.adaptive_inner,
        curvature=args.curvature,
    )
    return ExperimentSpec(
        mode=args.mode,
        operator="masked-dft" if args.mode == "image-tv" else args.operator,
        k=args.k, n=args.n, n_list=tuple(args.n_list), k_list=tuple(args.k_list),
        masks=args.masks, b=args.b, lam=args.lam, photon_scale=args.photon_scale,
        trials=args.trials, seed=args.seed, reg=reg, config=config, out=args.out,
        image=args.image, side=args.side, wall_clock=args.wall_clock,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = spec_from_args(args)
        spec.validate()
        rows = run_experiment(spec)
        write_csv(rows, spec.out)
        summary = summarize(rows)
        write_summary_csv(summary, spec.out.with_name(spec.out.stem + "_summary.csv"))
    except (OSError, PgmError) as exc:
        print(f"pdmm: I/O error: {exc}", file=sys.stderr)
        return 1
    except (SpecError, ValueError) as exc:
        print(f"pdmm: invalid specification: {exc}", file=sys.stderr)
        return 2
    print(f"{spec.mode}: seed={spec.seed} photon_scale={spec.photon_scale:g} b={spec.b:g} -> {spec.out}")
    for rec in summary:
        print(
            f"K={rec['K']} N={rec['N']} ok={rec['n_ok']}/{rec['trials']} "
            f"nrmse mean={rec['nrmse_mean']:.4g} median={rec['nrmse_median']:.4g}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
