import json
import math
import subprocess
import sys

import pytest

from geosmc.cli import main

SHORT_SPACECRAFT = """
[system]
type = spacecraft

[gains]
lambda = 1.0
k_s = 2.0

[initial]
rotvec = {rotvec}

[desired]
type = static

[integrator]
h = 1e-3
t_end = {t_end}
log_stride = 20

[output]
csv = short.csv
"""


def write_ini(tmp_path, rotvec="0, 0, 2.0", t_end=1.0, name="short.ini"):
    text = SHORT_SPACECRAFT.format(rotvec=rotvec, t_end=t_end)
    path = tmp_path / name
    path.write_text(text)
    return path


def summary(out):
    line = next(ln for ln in out.splitlines() if ln.startswith("SUMMARY "))
    return json.loads(line[len("SUMMARY "):])


class TestSimulate:
    def test_clean_run_writes_outputs(self, tmp_path, capsys):
        ini = write_ini(tmp_path)
        assert main(["simulate", str(ini), "--out", str(tmp_path / "out")]) == 0
        out = capsys.readouterr().out
        for name in ("short.csv", "short_plot.py", "short.png"):
            assert (tmp_path / "out" / name).is_file()
        assert "settling_time" in out and "peak_tau_norm" in out
        assert main(["metrics", str(tmp_path / "out" / "short.csv")]) == 0

    def test_no_plot_skips_png(self, tmp_path):
        ini = write_ini(tmp_path, t_end=0.2)
        assert main(["simulate", str(ini), "--out", str(tmp_path), "--no-plot"]) == 0
        assert (tmp_path / "short.csv").is_file() and not (tmp_path / "short.png").exists()

    def test_same_config_same_bytes(self, tmp_path):
        ini = write_ini(tmp_path, t_end=0.5)
        main(["simulate", str(ini), "--out", str(tmp_path / "a"), "--no-plot"])
        main(["simulate", str(ini), "--out", str(tmp_path / "b"), "--no-plot"])
        assert (tmp_path / "a" / "short.csv").read_bytes() == (tmp_path / "b" / "short.csv").read_bytes()

    def test_zero_lambda_is_config_error(self, tmp_path, capsys):
        ini = write_ini(tmp_path)
        ini.write_text(ini.read_text().replace("lambda = 1.0", "lambda = 0"))
        assert main(["simulate", str(ini), "--out", str(tmp_path)]) == 1
        assert "lambda" in capsys.readouterr().err

    def test_missing_file_is_config_error(self, tmp_path):
        assert main(["simulate", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 1

    def test_start_near_antipode_aborts(self, tmp_path, capsys):
        ini = write_ini(tmp_path, rotvec=f"0, 0, {math.pi - 3e-4!r}")
        assert main(["simulate", str(ini), "--out", str(tmp_path)]) == 3
        assert "abort" in capsys.readouterr().err
        assert not (tmp_path / "short.csv").exists()

    def test_certify_lambda_reports(self, tmp_path, capsys):
        ini = write_ini(tmp_path, t_end=0.1)
        assert main(["simulate", str(ini), "--out", str(tmp_path), "--no-plot", "--certify-lambda"]) == 0
        assert "certify-lambda" in capsys.readouterr().out

    def test_console_script_entry(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "geosmc.cli", "--version"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and proc.stdout.startswith("geosmc ")


class TestMetrics:
    def test_truncated_csv_exit_1(self, tmp_path, capsys):
        ini = write_ini(tmp_path, t_end=0.2)
        main(["simulate", str(ini), "--out", str(tmp_path), "--no-plot"])
        lines = (tmp_path / "short.csv").read_text().splitlines()
        bad = tmp_path / "cut.csv"
        bad.write_text("\n".join(lines[:-3]) + "\n")
        capsys.readouterr()
        assert main(["metrics", str(bad)]) == 1
        assert "schema error" in capsys.readouterr().err

    def test_missing_csv_exit_1(self, tmp_path):
        assert main(["metrics", str(tmp_path / "none.csv")]) == 1


class TestVerify:
    def test_lie_suite_passes_and_prints_roundtrip(self, capsys):
        assert main(["verify", "lie"]) == 0
        out = capsys.readouterr().out
        data = summary(out)
        assert data["failed"] == [] and data["groups"] == 3
        rt = next(r for r in data["results"] if r["name"] == "lie.exp_log_roundtrip")
        assert max(v for k, v in rt["values"].items() if k.endswith("max_error")) < 1e-9
        assert "roundtrip" in out

    def test_negative_control_flags_descent(self, capsys):
        code = main(["verify", "kinctrl", "--kb", "1"])
        out = capsys.readouterr().out
        assert code > 0
        assert "Definition 1(iii) FLAGGED" in out
        assert "kinctrl.se2_descent" in summary(out)["failed"]

    def test_json_summary_file(self, tmp_path, capsys):
        path = tmp_path / "s.json"
        main(["verify", "dynamics", "--json", str(path)])
        data = json.loads(path.read_text())
        assert data["suite"] == "dynamics" and data["failed"] == []

    @pytest.mark.parametrize("jobs", [1, 4])
    def test_all_exit_is_failed_group_count(self, capsys, jobs):
        code = main(["verify", "all", "--jobs", str(jobs)])
        data = summary(capsys.readouterr().out)
        assert code == len(data["failed"])
        # the printed beta is even under inversion, so only the odd-symmetry group fails
        assert data["failed"] == ["kinctrl.se2_odd_symmetry"]
        assert data["groups"] == 15
