import json

import numpy as np
import pandas as pd
import pytest

from parhawkes.cli import main
from parhawkes.fileio import read_events, read_params, write_events, write_params
from parhawkes import HawkesParams, validate_sequence


def run(argv):
    return main(argv)


class TestSimulateCommand:
    def test_hub_writes_sorted_csv(self, tmp_path, capsys):
        out = tmp_path / "e.csv"
        code = run(["simulate", "--hub", "4", "--horizon", "100", "--seed", "1", "--out", str(out)])
        assert code == 0
        seq = read_events(out)
        assert np.all(np.diff(seq.times) >= 0)
        assert "branching_radius" in capsys.readouterr().out

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["simulate", "--hub", "3", "--horizon", "200", "--seed", "7", "--out"]
        assert run(argv + [str(a)]) == 0
        assert run(argv + [str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unstable_params_exit_2(self, tmp_path, capsys):
        params = tmp_path / "unstable.json"
        write_params(
            params,
            HawkesParams(mu=[0.1], alpha=np.full((1, 1, 1), 1.5), gamma=[1.0]),
        )
        code = run(["simulate", "--params", str(params), "--horizon", "10",
                    "--seed", "0", "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert "radius" in capsys.readouterr().err

    def test_explosion_guard_exit_3(self, tmp_path):
        params = tmp_path / "fast.json"
        write_params(params, HawkesParams(mu=[100.0], alpha=np.zeros((1, 1, 1)), gamma=[1.0]))
        code = run(["simulate", "--params", str(params), "--horizon", "1000",
                    "--max-events", "50", "--seed", "0", "--out", str(tmp_path / "x.csv")])
        assert code == 3

    def test_target_events(self, tmp_path):
        out = tmp_path / "e.csv"
        code = run(["simulate", "--scale-free", "5", "--target-events", "300",
                    "--seed", "2", "--out", str(out)])
        assert code == 0
        assert len(read_events(out)) == 300


class TestFitCommand:
    def test_poisson_rate_recovery(self, tmp_path):
        rng = np.random.default_rng(0)
        T = 5000.0
        n = rng.poisson(0.5 * T)
        seq = validate_sequence(np.sort(rng.uniform(0, T, n)), np.zeros(n, dtype=np.int64), T, 1)
        events = tmp_path / "e.csv"
        write_events(events, seq)
        out_p, out_r = tmp_path / "p.json", tmp_path / "r.csv"
        code = run(["fit", "--events", str(events), "--epochs", "200", "--lambda1", "0",
                    "--out-params", str(out_p), "--out-report", str(out_r)])
        assert code == 0
        fitted = read_params(out_p)
        assert abs(fitted.mu[0] - n / T) / (n / T) < 0.05

    def test_backend_and_batch_consistency(self, tmp_path):
        rng = np.random.default_rng(1)
        times = np.sort(rng.uniform(0, 500, 2000))
        seq = validate_sequence(times, rng.integers(0, 3, 2000), 500.0, 3)
        events = tmp_path / "e.csv"
        write_events(events, seq)

        outputs = {}
        for tag, extra in {
            "scan": ["--backend", "scan"],
            "sequential": ["--backend", "sequential"],
            "batched": ["--backend", "scan", "--batch-size", "512"],
        }.items():
            out_p = tmp_path / f"p_{tag}.json"
            out_r = tmp_path / f"r_{tag}.csv"
            code = run(["fit", "--events", str(events), "--epochs", "40",
                        "--out-params", str(out_p), "--out-report", str(out_r)] + extra)
            assert code == 0
            outputs[tag] = (read_params(out_p), pd.read_csv(out_r))

        p_scan, r_scan = outputs["scan"]
        p_seq, _ = outputs["sequential"]
        for attr in ("mu", "alpha", "gamma"):
            a, b = getattr(p_scan, attr), getattr(p_seq, attr)
            np.testing.assert_allclose(a, b, rtol=1e-6)
        _, r_batched = outputs["batched"]
        np.testing.assert_allclose(
            r_batched["nll"].to_numpy(), r_scan["nll"].to_numpy(), rtol=1e-10
        )

    def test_worker_invariance_byte_identical(self, tmp_path):
        rng = np.random.default_rng(2)
        times = np.sort(rng.uniform(0, 100, 400))
        seq = validate_sequence(times, rng.integers(0, 2, 400), 100.0, 2)
        events = tmp_path / "e.csv"
        write_events(events, seq)
        files = {}
        for w in ("1", "8"):
            out_p, out_r = tmp_path / f"p{w}.json", tmp_path / f"r{w}.csv"
            assert run(["fit", "--events", str(events), "--epochs", "15", "--workers", w,
                        "--out-params", str(out_p), "--out-report", str(out_r)]) == 0
            files[w] = out_p.read_bytes()
        assert files["1"] == files["8"]

    def test_invalid_events_exit_2(self, tmp_path):
        events = tmp_path / "bad.csv"
        events.write_text("time,mark\n2.0,0\n1.0,0\n")
        code = run(["fit", "--events", str(events), "--epochs", "1",
                    "--out-params", str(tmp_path / "p.json"),
                    "--out-report", str(tmp_path / "r.csv")])
        assert code == 2


class TestGradCheckCommand:
    def test_passes_on_toy(self, tmp_path, capsys):
        seq = validate_sequence([0.0, 1.0, 2.0], [0, 0, 0], 2.0, 1)
        write_events(tmp_path / "e.csv", seq)
        write_params(
            tmp_path / "p.json",
            HawkesParams(mu=[0.1], alpha=np.full((1, 1, 1), 0.5), gamma=[1.0]),
        )
        code = run(["grad-check", "--events", str(tmp_path / "e.csv"),
                    "--params", str(tmp_path / "p.json")])
        assert code == 0
        assert "max_abs_err" in capsys.readouterr().out

    def test_kink_reported(self, tmp_path, capsys):
        rng = np.random.default_rng(3)
        times = np.sort(rng.uniform(0, 50, 100))
        seq = validate_sequence(times, rng.integers(0, 2, 100), 50.0, 2)
        write_events(tmp_path / "e.csv", seq)
        alpha = np.full((1, 2, 2), 0.2)
        alpha[0, 0, 1] = 0.05  # exactly at the hinge
        write_params(tmp_path / "p.json", HawkesParams(mu=[0.1, 0.1], alpha=alpha, gamma=[1.0]))
        code = run(["grad-check", "--events", str(tmp_path / "e.csv"),
                    "--params", str(tmp_path / "p.json")])
        out = capsys.readouterr().out
        assert code == 0
        assert "kink-adjacent" in out and "alpha[0,0,1]" in out

    def test_random_instance_passes(self, tmp_path):
        rng = np.random.default_rng(4)
        times = np.sort(rng.uniform(0, 100, 300))
        seq = validate_sequence(times, rng.integers(0, 4, 300), 100.0, 4)
        write_events(tmp_path / "e.csv", seq)
        write_params(
            tmp_path / "p.json",
            HawkesParams(
                mu=rng.uniform(0.05, 0.2, 4),
                alpha=rng.uniform(0.07, 0.25, (1, 4, 4)),
                gamma=[1.3],
            ),
        )
        assert run(["grad-check", "--events", str(tmp_path / "e.csv"),
                    "--params", str(tmp_path / "p.json")]) == 0


class TestBenchCommand:
    def test_tiny_grid(self, tmp_path):
        out = tmp_path / "bench.csv"
        code = run(["bench", "--grid", "N=2^7..2^9", "--m", "4", "--k", "1",
                    "--backends", "scan,sequential,naive", "--repeats", "1",
                    "--naive-cap", "256", "--seed", "0", "--out", str(out)])
        assert code == 0
        df = pd.read_csv(out)
        assert len(df) == 9  # 3 sizes x 3 backends
        naive_512 = df[(df.backend == "naive") & (df.N == 512)]
        assert naive_512.status.iloc[0] == "skipped(quadratic)"
        ok = df[df.status == "ok"]
        assert np.all(ok.epoch_time_seconds > 0)
        scan_rows = df[(df.backend == "scan") & (df.status == "ok")]
        assert np.all(scan_rows.scan_vs_sequential_rel < 1e-9)

    def test_grid_list_syntax(self, tmp_path):
        out = tmp_path / "bench.csv"
        code = run(["bench", "--grid", "N=128,256", "--m", "3", "--backends", "scan",
                    "--repeats", "1", "--out", str(out)])
        assert code == 0
        df = pd.read_csv(out)
        assert sorted(df.N.tolist()) == [128, 256]
