import json
import math

import numpy as np
import pytest

from zenogrover.cli import RunConfig, main, run_config


def read_table(path):
    header = {}
    rows = []
    names = None
    for line in path.read_text().splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            if key != "zenogrover version":
                header[key] = json.loads(value)
            continue
        if names is None:
            names = line.split(",")
            continue
        rows.append(line.split(","))
    cols = {
        name: [row[i] for row in rows] for i, name in enumerate(names)
    }
    return header, cols


def sidecar(path):
    return json.loads(path.with_name(path.name + ".meta.json").read_text())


class TestRun:
    def test_writes_trajectory(self, tmp_path):
        out = tmp_path / "traj.csv"
        rc = main([
            "run", "--n", "1e6", "--k", "1", "--tau", "0.2", "--alpha", "0.3",
            "--out", str(out),
        ])
        assert rc == 0
        header, cols = read_table(out)
        assert header["alpha"] == 0.3
        assert len(cols["n"]) == 471  # n_G + initial row
        meta = sidecar(out)
        assert meta["summary"]["final_fidelity"] == pytest.approx(0.977, abs=0.01)
        assert meta["summary"]["final_survival"] == pytest.approx(0.275, abs=0.01)

    def test_no_rotation_keeps_survival_one(self, tmp_path):
        out = tmp_path / "unitary.csv"
        assert main(["run", "--n", "1e4", "--dt", "1.0", "--out", str(out)]) == 0
        _, cols = read_table(out)
        P = np.array([float(v) for v in cols["P"]])
        assert np.allclose(P, 1.0, atol=1e-12)

    def test_effective_engine(self, tmp_path):
        out = tmp_path / "eff.csv"
        rc = main([
            "run", "--n", "1e6", "--k", "1", "--tau", "0.2", "--alpha", "0.3",
            "--engine", "effective", "--out", str(out),
        ])
        assert rc == 0
        _, cols = read_table(out)
        assert float(cols["f"][-1]) == pytest.approx(0.99, abs=0.02)
        assert all(v == "nan" for v in cols["d"][:3])

    def test_deterministic_rerun(self, tmp_path):
        out = tmp_path / "det.csv"
        args = ["run", "--n", "1e5", "--dt", "2.0", "--alpha", "0.2", "--out", str(out)]
        assert main(args) == 0
        first = out.read_bytes()
        first_meta = out.with_name(out.name + ".meta.json").read_bytes()
        assert main(args) == 0
        assert out.read_bytes() == first
        assert out.with_name(out.name + ".meta.json").read_bytes() == first_meta

    def test_config_errors_exit_2(self, tmp_path):
        assert main(["run", "--n", "1e6", "--out", str(tmp_path / "x.csv")]) == 2
        assert main(["run", "--dt", "1.0"]) == 2
        assert main(["run", "--n", "1.5", "--dt", "1.0"]) == 2


class TestPrintConfig:
    def test_prints_and_does_not_run(self, tmp_path, capsys):
        out = tmp_path / "nothing.csv"
        rc = main([
            "run", "--n", "1e6", "--dt", "1.0", "--out", str(out), "--print-config",
        ])
        assert rc == 0
        assert not out.exists()
        config = json.loads(capsys.readouterr().out)
        assert config["mode"] == "run"
        assert config["N"] == 1e6
        assert config["delta_t"] == 1.0


class TestSweepDt:
    def test_single_point_grid(self, tmp_path):
        out = tmp_path / "one.csv"
        rc = main([
            "sweep-dt", "--n", "1e6", "--grid", "3.14:3.14:1", "--alpha", "0.3",
            "--out", str(out),
        ])
        assert rc == 0
        _, cols = read_table(out)
        assert len(cols["delta_t"]) == 1

    def test_minimum_sits_at_pi(self, tmp_path):
        out = tmp_path / "dt.csv"
        lo, hi = math.pi - 0.3, math.pi + 0.3
        rc = main([
            "sweep-dt", "--n", "1e6", "--grid", f"{lo}:{hi}:7", "--alpha", "0.3",
            "--out", str(out),
        ])
        assert rc == 0
        meta = sidecar(out)
        assert meta["summary"]["argmin_delta_t"] == pytest.approx(math.pi, abs=1e-12)

    def test_parallel_bytes_identical(self, tmp_path):
        base = ["sweep-dt", "--n", "1e5", "--grid", "2.9:3.4:6", "--alpha", "0.3"]
        out1, out8 = tmp_path / "j1.csv", tmp_path / "j8.csv"
        assert main(base + ["--out", str(out1), "--jobs", "1"]) == 0
        assert main(base + ["--out", str(out8), "--jobs", "8"]) == 0
        assert out1.read_bytes() == out8.read_bytes()

    def test_missing_grid_exits_2(self):
        assert main(["sweep-dt", "--n", "1e6", "--alpha", "0.3"]) == 2


class TestSweepEps:
    def test_parallel_bytes_identical(self, tmp_path):
        base = [
            "sweep-eps", "--n", "1e8", "--k", "1", "--tau", "0.2", "--alpha", "0.3",
            "--grid=-4:4:9",
        ]
        out1, out8 = tmp_path / "e1.csv", tmp_path / "e8.csv"
        assert main(base + ["--out", str(out1), "--jobs", "1"]) == 0
        assert main(base + ["--out", str(out8), "--jobs", "8"]) == 0
        assert out1.read_bytes() == out8.read_bytes()

    def test_divergent_points_flagged(self, tmp_path):
        out = tmp_path / "eps.csv"
        ratio = 2 * math.sqrt(3)
        rc = main([
            "sweep-eps", "--n", "1e8", "--k", "1", "--tau", "0.2", "--alpha", "0.3",
            "--grid", f"{ratio}:{ratio}:1", "--out", str(out),
        ])
        assert rc == 0
        _, cols = read_table(out)
        assert cols["divergent"] == ["true"]
        assert cols["Q"] == ["inf"]


class TestPlanScale:
    def test_prints_plan(self, capsys):
        rc = main([
            "plan-scale", "--n", "1e6", "--k", "1", "--tau", "0.2", "--nr", "1e8",
        ])
        assert rc == 0
        text = capsys.readouterr().out
        assert "N2 = 108190849" in text
        assert "k2 = 11" in text

    def test_check_flag_runs_both(self, tmp_path, capsys):
        out = tmp_path / "plan.csv"
        rc = main([
            "plan-scale", "--n", "1e4", "--k", "1", "--tau", "0.2", "--nr", "1e6",
            "--alpha", "0.3", "--check", "--out", str(out),
        ])
        assert rc == 0
        meta = sidecar(out)
        assert meta["summary"]["check"]["max_fidelity_deviation"] < 0.02

    def test_rejects_backwards_request(self):
        assert main([
            "plan-scale", "--n", "1e6", "--k", "1", "--tau", "0.2", "--nr", "1e4",
        ]) == 2


class TestVerify:
    def test_small_suite_passes(self, tmp_path, capsys):
        out = tmp_path / "verify.csv"
        rc = main(["verify", "--n", "8", "--steps", "60", "--out", str(out)])
        assert rc == 0
        assert "all cases passed" in capsys.readouterr().out
        meta = sidecar(out)
        assert meta["summary"]["failures"] == 0
        assert meta["summary"]["unitary_limit_ok"] is True

    def test_injected_fault_fails(self, capsys):
        rc = main([
            "verify", "--n", "8", "--steps", "40", "--inject-fault", "hdown-sign",
        ])
        assert rc == 1
        assert "FAIL" in capsys.readouterr().out

    def test_oversized_request_is_config_error(self):
        assert main(["verify", "--n", "8192"]) == 2


class TestEffCompare:
    def test_columns_agree_in_unitary_limit(self, tmp_path):
        out = tmp_path / "cmp.csv"
        rc = main([
            "eff-compare", "--n", "1e12", "--k", "2", "--tau", "0", "--dtheta", "0",
            "--steps", "400", "--out", str(out),
        ])
        assert rc == 0
        meta = sidecar(out)
        assert meta["summary"]["max_dev_eff_exact"] < 1e-6
        assert meta["summary"]["max_dev_eq11_exact"] < 1e-6
        assert meta["summary"]["max_dev_eff_eq11"] < 1e-6

    def test_detuned_tracking(self, tmp_path):
        out = tmp_path / "cmp4.csv"
        N = 1000000162505052417
        x = 1.0 / math.sqrt(float(N))
        rc = main([
            "eff-compare", "--n", repr(float(N)), "--k", "1063662", "--tau", "0.2",
            "--alpha", "0.3", "--eps", repr(2 * x * math.sqrt(3)), "--out", str(out),
        ])
        assert rc == 0
        meta = sidecar(out)
        assert meta["summary"]["max_dev_eff_exact"] <= 0.1


class TestRoundTrip:
    def test_sidecar_config_reproduces_file(self, tmp_path):
        import dataclasses

        out = tmp_path / "rt.csv"
        rc = main([
            "run", "--n", "1e6", "--k", "1", "--tau", "0.2", "--alpha", "0.3",
            "--steps", "100", "--out", str(out),
        ])
        assert rc == 0
        original = out.read_bytes()
        config = dataclasses.replace(
            RunConfig.from_dict(sidecar(out)["config"]), out=str(out)
        )
        out.unlink()
        assert run_config(config) == 0
        assert out.read_bytes() == original
