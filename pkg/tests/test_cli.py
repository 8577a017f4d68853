import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from elastobem.cli import ConfigError, apply_override, build_run_config, fixture_path, load_config, main

FIXTURES = [f"ex{i}_{name}.json" for i, name in enumerate(
    ["series", "lowfreq", "highfreq", "star", "mixed", "corner", "contrast"], start=1)]


def write_config(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def kite_config(**medium):
    med = {"lambda": 2.0, "mu": 1.0, "rho": 1.0, "omega": 1.0}
    med.update(medium)
    return {"medium": med, "geometry": {"curve": "kite", "N": 64},
            "incident": {"type": "manufactured", "location": [0.0, 0.0]}}


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ")
    return list(csv.reader(lines[1:]))


class TestConfig:
    @pytest.mark.parametrize("name", FIXTURES)
    def test_fixtures_load(self, name):
        run = load_config(fixture_path(name))
        assert run.medium.omega > 0

    def test_override_parses_json(self):
        cfg = {"medium": {"mu": 1.0}}
        apply_override(cfg, "medium.mu=0.25")
        apply_override(cfg, "geometry.curve=kite")
        assert cfg == {"medium": {"mu": 0.25}, "geometry": {"curve": "kite"}}
        with pytest.raises(ConfigError):
            apply_override(cfg, "novalue")

    def test_missing_omega(self):
        raw = kite_config()
        del raw["medium"]["omega"]
        with pytest.raises(ConfigError, match="omega"):
            build_run_config(raw)

    @pytest.mark.parametrize("patch", [
        {"solver": {"eta": 0.0}},
        {"geometry": {"curve": "kite", "N": 2}},
        {"geometry": {"curve": "nonsense"}},
        {"incident": {"type": "shear"}},
        {"medium": {"lambda": 2.0, "mu": -1.0, "rho": 1.0, "omega": 1.0}},
        {"output": {"field": "both"}},
    ])
    def test_invalid_values(self, patch):
        raw = kite_config()
        raw.update(patch)
        with pytest.raises(ConfigError):
            build_run_config(raw)


class TestExitCodes:
    def test_missing_omega_exit_2(self, tmp_path, capsys):
        raw = kite_config()
        del raw["medium"]["omega"]
        code = main(["solve", "--config", write_config(tmp_path, raw), "--out", str(tmp_path)])
        assert code == 2
        assert "omega" in capsys.readouterr().err

    def test_eta_zero_rejected_before_solve(self, tmp_path):
        cfg = write_config(tmp_path, kite_config())
        assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--override", "solver.eta=0"]) == 2
        assert not (tmp_path / "solution.csv").exists()

    def test_bad_json_reports_line(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "medium": {\n    "omega": 1.0,,\n  }\n}\n')
        assert main(["solve", "--config", str(path)]) == 2
        assert "line 3" in capsys.readouterr().err

    def test_unknown_command(self):
        assert main(["frobnicate"]) == 2

    def test_numerical_failure_exit_1(self, tmp_path, capsys):
        raw = kite_config()
        raw["incident"]["location"] = [5.0, 0.0]  # source outside the obstacle
        assert main(["solve", "--config", write_config(tmp_path, raw), "--out", str(tmp_path)]) == 1
        assert "numerical failure" in capsys.readouterr().err


class TestSolve:
    def test_kite_manufactured(self, tmp_path):
        cfg = write_config(tmp_path, kite_config())
        assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "solution.csv")
        assert rows[0] == ["loop", "index", "x", "y", "re_u1", "im_u1", "re_u2", "im_u2"]
        assert len(rows) == 65
        summary = dict(kv.split("=") for kv in (tmp_path / "run_summary.txt").read_text().split())
        assert float(summary["residual"]) <= 1e-10
        assert float(summary["l2_error"]) < 5e-2

    def test_bit_identical_outputs(self, tmp_path):
        cfg = write_config(tmp_path, kite_config())
        main(["solve", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["solve", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "2"])
        assert (tmp_path / "a" / "solution.csv").read_bytes() == (tmp_path / "b" / "solution.csv").read_bytes()

    def test_series_table(self, tmp_path):
        assert main(["solve", "--config", str(fixture_path("ex1_series.json")), "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "series_errors.csv")
        assert rows[0] == ["M", "omega", "abs_err_F1", "abs_err_F2", "abs_err_F3"]
        assert len(rows) > 1


class TestConvergence:
    def test_single_N_blank_order(self, tmp_path):
        cfg = write_config(tmp_path, kite_config(omega=2.0))
        assert main(["convergence", "--config", cfg, "--out", str(tmp_path), "--N", "32"]) == 0
        rows = read_csv(tmp_path / "convergence.csv")
        assert rows[0] == ["N", "omega", "l2_error", "linf_error", "order", "residual"]
        assert rows[1][4] == ""

    def test_non_doubling_list(self, tmp_path):
        cfg = write_config(tmp_path, kite_config(omega=2.0))
        assert main(["convergence", "--config", cfg, "--out", str(tmp_path), "--N", "30", "45"]) == 0
        rows = read_csv(tmp_path / "convergence.csv")[1:]
        e1, e2 = float(rows[0][2]), float(rows[1][2])
        assert float(rows[1][4]) == pytest.approx(np.log(e1 / e2) / np.log(45 / 30))

    def test_descending_rejected(self, tmp_path):
        cfg = write_config(tmp_path, kite_config())
        assert main(["convergence", "--config", cfg, "--out", str(tmp_path), "--N", "64", "32"]) == 2


class TestFieldmap:
    def grid_config(self, **incident):
        return {"medium": {"lambda": 2.0, "mu": 1.0, "rho": 1.0, "omega": 2.0},
                "geometry": {"curve": "star", "N": 64},
                "incident": {"type": "plane_p", "direction": [1.0, 0.0], **incident},
                "output": {"field": "total",
                           "grid": {"xmin": -3, "xmax": 3, "ymin": -3, "ymax": 3, "nx": 15, "ny": 15}}}

    def test_mask_and_header(self, tmp_path):
        cfg = write_config(tmp_path, self.grid_config())
        assert main(["fieldmap", "--config", cfg, "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "fieldmap.csv")
        assert rows[0] == ["x", "y", "re_u1", "im_u1", "re_u2", "im_u2", "mask"]
        data = np.array(rows[1:], dtype=float)
        assert len(data) == 225
        centre = data[(data[:, 0] == 0) & (data[:, 1] == 0)][0]
        assert centre[6] == 1 and np.all(centre[2:6] == 0)
        corner = data[(data[:, 0] == 3) & (data[:, 1] == 3)][0]
        assert corner[6] == 0 and np.any(corner[2:6] != 0)

    def test_zero_amplitude(self, tmp_path):
        cfg = write_config(tmp_path, self.grid_config(amplitude=0.0))
        assert main(["fieldmap", "--config", cfg, "--out", str(tmp_path)]) == 0
        data = np.array(read_csv(tmp_path / "fieldmap.csv")[1:], dtype=float)
        assert np.all(data[:, 2:6] == 0)

    def test_missing_grid(self, tmp_path):
        raw = self.grid_config()
        del raw["output"]["grid"]
        assert main(["fieldmap", "--config", write_config(tmp_path, raw), "--out", str(tmp_path)]) == 2


class TestSelftest:
    def test_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        for suite in ("specfun", "moments", "kernel", "mass"):
            assert f"[PASS] {suite}" in out
        assert "passed" in out

    def test_fault_injection(self, capsys):
        assert main(["selftest", "--perturb-moment", "4:3"]) == 1
        out = capsys.readouterr().out
        assert "[FAIL] moments" in out and "I4[3]" in out

    def test_bad_hook(self):
        assert main(["selftest", "--perturb-moment", "9:1"]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "elastobem", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "selftest" in proc.stdout
