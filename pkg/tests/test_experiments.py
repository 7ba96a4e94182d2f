import csv
import dataclasses
import math

import numpy as np
import pytest

from pdmm import cli, experiments
from pdmm.experiments import (
    COLUMNS,
    ExperimentSpec,
    ResultRow,
    SpecError,
    read_csv,
    run_experiment,
    summarize,
    write_csv,
)
from pdmm.pgm import read_image, write_image
from pdmm.solver import MonotonicityError, SolverConfig


def make_row(rng, i):
    r = lambda: float(f"{rng.normal() * 10.0 ** rng.integers(-5, 5):.12g}")
    return ResultRow(
        f"sweep-n-p0-t{i}", int(rng.integers(0, 2**32)), 20, int(rng.integers(21, 5000)), 0.1, 8.0,
        "pdmm", abs(r()), r(), int(rng.integers(1, 1000)), int(rng.integers(1, 9000)), abs(r()), "converged",
    )


class TestCsv:
    def test_empty_is_header_only(self, tmp_path):
        path = tmp_path / "e.csv"
        write_csv([], path)
        assert path.read_bytes() == (",".join(COLUMNS) + "\n").encode()

    def test_single_row_round_trip(self, tmp_path, rng):
        row = make_row(rng, 0)
        write_csv([row], tmp_path / "one.csv")
        assert read_csv(tmp_path / "one.csv") == [row]

    def test_thousand_rows(self, tmp_path, rng):
        rows = [make_row(rng, i) for i in range(1000)]
        write_csv(rows, tmp_path / "many.csv")
        assert read_csv(tmp_path / "many.csv") == rows
        assert b"\r" not in (tmp_path / "many.csv").read_bytes()

    def test_twelve_significant_digits(self, tmp_path):
        row = ResultRow("x", 1, 2, 3, 0.1, 0.0, "pdmm", math.pi, float("nan"), 1, 1, float("nan"), "stalled")
        write_csv([row], tmp_path / "d.csv")
        line = (tmp_path / "d.csv").read_text().splitlines()[1].split(",")
        assert line[7] == "3.14159265359" and line[8] == "nan"


class TestSpec:
    @pytest.mark.parametrize(
        "kw",
        [
            {"mode": "sweep-n", "n_list": ()},
            {"mode": "sweep-n", "n_list": (400, 200)},
            {"mode": "sweep-k", "k_list": (5, 5)},
            {"trials": 0},
            {"n": 20, "k": 20},
            {"mode": "bogus"},
            {"operator": "gaussian"},
            {"reg": "l2"},
            {"photon_scale": 0.0},
            {"b": -1.0},
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(SpecError):
            run_experiment(ExperimentSpec(**kw))

    def test_points(self):
        assert ExperimentSpec(mode="sweep-k", k_list=(5, 10), n=300).points() == [(5, 300), (10, 300)]
        assert ExperimentSpec(mode="image-tv", side=4, masks=2).points() == [(16, 98)]


def small_spec(**kw):
    base = dict(mode="single", k=6, n=80, trials=2, photon_scale=50.0, seed=3)
    base.update(kw)
    return ExperimentSpec(**base)


class TestRun:
    def test_sweep_single_point_deterministic(self, tmp_path):
        spec = ExperimentSpec(mode="sweep-n", k=20, n_list=(200,), trials=1, seed=5)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(run_experiment(spec), a)
        write_csv(run_experiment(spec), b)
        assert len(read_csv(a)) == 1
        assert a.read_bytes() == b.read_bytes()

    def test_substreams_do_not_depend_on_trial_count(self):
        two = run_experiment(small_spec(trials=2))
        three = run_experiment(small_spec(trials=3))
        key = lambda rows: [dataclasses.replace(r, wall_clock_s=0.0) for r in rows]
        assert key(two) == key(three[:2])
        assert len({r.trial_seed for r in three}) == 3

    def test_row_order_and_summary(self):
        rows = run_experiment(small_spec(mode="sweep-n", n_list=(40, 80), trials=3))
        assert [(r.N, r.experiment) for r in rows] == [
            (40, "sweep-n-p0-t0"), (40, "sweep-n-p0-t1"), (40, "sweep-n-p0-t2"),
            (80, "sweep-n-p1-t0"), (80, "sweep-n-p1-t1"), (80, "sweep-n-p1-t2"),
        ]
        summary = summarize(rows)
        for rec, grp in zip(summary, (rows[:3], rows[3:])):
            vals = [r.nrmse for r in grp]
            assert rec["nrmse_mean"] == pytest.approx(sum(vals) / 3, abs=1e-12)
            assert rec["nrmse_median"] == sorted(vals)[1]
            assert rec["nrmse_stderr"] == pytest.approx(np.std(vals, ddof=1) / math.sqrt(3), rel=1e-12)

    def test_trace_files(self, tmp_path):
        spec = ExperimentSpec(mode="trace", k=20, n=800, trials=1, photon_scale=150.0, out=tmp_path / "t.csv")
        rows = run_experiment(spec)
        with open(tmp_path / "t_trace_000.csv", newline="") as fh:
            recs = list(csv.DictReader(fh))
        f = np.array([float(r["objective"]) for r in recs])
        assert len(recs) == rows[0].outer_iters + 1
        assert np.all(np.diff(f) <= 1e-9 * (1 + np.abs(f[:-1])))
        assert float(recs[-1]["nrmse"]) == pytest.approx(rows[0].nrmse, rel=1e-9)

    def test_masked_dft_and_regularized(self):
        rows = run_experiment(small_spec(operator="masked-dft", k=8, masks=4, reg="l1-identity", lam=0.5))
        assert all(r.status == "converged" and r.algorithm == "pdmm-l1" for r in rows)
        assert rows[0].N == 4 * 15 and rows[0].lam == 0.5

    def test_image_mode_writes_pgm(self, tmp_path):
        spec = ExperimentSpec(mode="image-tv", side=12, masks=5, trials=1, reg="tv", lam=1.0,
                              photon_scale=20.0, out=tmp_path / "im.csv",
                              config=SolverConfig(max_outer=100))
        rows = run_experiment(spec)
        img = read_image(tmp_path / "im_recovered_000.pgm")
        assert img.shape == (12, 12)
        assert rows[0].K == 144 and rows[0].nrmse < 0.5

    def test_image_input_and_crop(self, tmp_path):
        big = np.zeros((20, 20))
        big[5:15, 5:15] = 1.0
        write_image(tmp_path / "in.pgm", big)
        spec = ExperimentSpec(mode="image-tv", image=tmp_path / "in.pgm", side=10, masks=3, trials=1,
                              reg="tv", lam=1.0, photon_scale=10.0, config=SolverConfig(max_outer=20))
        assert run_experiment(spec)[0].K == 100
        with pytest.raises(SpecError):
            run_experiment(ExperimentSpec(mode="image-tv", image=tmp_path / "in.pgm", side=30, trials=1))

    def test_solver_failure_becomes_row(self, monkeypatch):
        def boom(*args, **kwargs):
            raise MonotonicityError("forced")

        monkeypatch.setattr(experiments, "solve", boom)
        rows = run_experiment(small_spec())
        assert [r.status for r in rows] == ["failed:MonotonicityError"] * 2
        assert math.isnan(rows[0].nrmse)
        assert summarize(rows)[0]["n_ok"] == 0

    def test_wall_clock_opt_in(self):
        assert math.isnan(run_experiment(small_spec(trials=1))[0].wall_clock_s)
        assert run_experiment(small_spec(trials=1, wall_clock=True))[0].wall_clock_s > 0


class TestCli:
    def test_single_run(self, tmp_path, capsys):
        out = tmp_path / "res.csv"
        code = cli.main(["single", "--k", "5", "--n", "60", "--trials", "2", "--photon-scale", "30",
                         "--out", str(out)])
        assert code == 0
        assert len(read_csv(out)) == 2
        assert (tmp_path / "res_summary.csv").exists()
        assert "ok=2/2" in capsys.readouterr().out

    def test_flags_reach_spec(self):
        args = cli.build_parser().parse_args([
            "sweep-k", "--k-list", "4,8", "--n", "100", "--masks", "7", "--b", "0", "--lambda", "3",
            "--eta-outer", "1e-5", "--eta-inner", "1e-4", "--max-outer", "9", "--max-inner", "4",
            "--no-adaptive-inner", "--reg", "l1-identity", "--operator", "masked-dft", "--curvature", "trace",
            "--seed", "11", "--trials", "3",
        ])
        spec = cli.spec_from_args(args)
        assert spec.k_list == (4, 8) and spec.masks == 7 and spec.b == 0 and spec.lam == 3
        assert spec.config.max_outer == 9 and spec.config.max_inner == 4
        assert not spec.config.adaptive_inner and spec.config.curvature == "trace"
        assert spec.config.eta_outer == 1e-5 and spec.config.eta_inner == 1e-4
        assert spec.operator == "masked-dft" and spec.reg == "l1-identity"

    def test_image_defaults_to_tv(self):
        spec = cli.spec_from_args(cli.build_parser().parse_args(["image-tv"]))
        assert spec.reg == "tv" and spec.operator == "masked-dft" and spec.lam == 8.0 and spec.masks == 21

    def test_spec_error_exit_code(self, tmp_path, capsys):
        code = cli.main(["sweep-n", "--n-list", "400,200", "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert "strictly increasing" in capsys.readouterr().err

    def test_io_error_exit_code(self, tmp_path):
        assert cli.main(["image-tv", "--image", str(tmp_path / "missing.pgm"), "--out", str(tmp_path / "o.csv")]) == 1
        bad = tmp_path / "bad.pgm"
        bad.write_bytes(b"P5\n4 4\n255\n\x00")
        assert cli.main(["image-tv", "--image", str(bad), "--side", "4", "--out", str(tmp_path / "o.csv")]) == 1
        assert cli.main(["single", "--trials", "1", "--out", str(tmp_path / "nodir" / "o.csv")]) == 1

    def test_argparse_rejects_bad_choice(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["single", "--reg", "l2"])
        assert exc.value.code != 0
