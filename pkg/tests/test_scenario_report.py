import hashlib
import math
import re
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from geosmc.errors import ConfigError
from geosmc.integrate import IntegratorConfig
from geosmc.lie import PoseSE2, Rotation3
from geosmc.plotting import plot_script_text, render_panels
from geosmc.report import (SCHEMAS, SchemaError, compute_metrics, log_slope,
                           read_trajectory_csv, settling_time,
                           write_trajectory_csv)
from geosmc.scenario import (BUILTINS, TrajectorySample, canonical_text,
                             load_scenario, parse_scenario, run_scenario)

SHORT_UNICYCLE = """
[system]
type = unicycle

[gains]
lambda = 1.5
k_s = 2.2

[initial]
x = -1.0
y = -1.0
theta = -0.7853981633974483

[desired]
type = lemniscate

[integrator]
h = 1e-3
t_end = 0.5
log_stride = 10

[output]
csv = short.csv
"""


def with_line(text, section, line):
    return text.replace(f"[{section}]\n", f"[{section}]\n{line}\n", 1)


class TestParsing:
    @pytest.mark.parametrize("name", sorted(BUILTINS))
    def test_builtins_load(self, name):
        scn = load_scenario(name)
        assert scn.name == name
        assert scn.gains.lam > 0 and scn.gains.k_s > 0
        state = scn.initial_state()
        assert state.r.shape == state.rdot.shape

    def test_reference_builtin_values(self):
        scn = load_scenario("unicycle-lemniscate")
        assert (scn.gains.lam, scn.gains.k_s) == (1.5, 2.2)
        assert scn.kin == dict(k_b=10.0, k1=0.01, k2=0.1)
        g = scn.initial_state().g
        assert (g.x, g.y, g.theta) == (-1.0, -1.0, -math.pi / 4)
        assert scn.integrator.h == 1e-3 and scn.integrator.t_end == 60.0

    @pytest.mark.parametrize("bad", ["lambda = 0", "lambda = -1", "k_s = 0", "k_b = 1", "k_b = 2"])
    def test_gain_validation(self, bad):
        key = bad.split(" = ")[0]
        text = "\n".join(ln for ln in SHORT_UNICYCLE.splitlines() if not ln.startswith(key + " "))
        with pytest.raises(ConfigError):
            parse_scenario(with_line(text, "gains", bad))

    @pytest.mark.parametrize("mutate", [
        lambda s: s + "\n[plotting]\nx = 1\n",
        lambda s: s.replace("type = unicycle", "type = boat"),
        lambda s: s.replace("[integrator]\nh = 1e-3", "[integrator]\nh = 0.5"),
        lambda s: s.replace("t_end = 0.5", "t_end = -1"),
        lambda s: s.replace("x = -1.0", "x = abc"),
        lambda s: s.replace("type = lemniscate", "type = spiral"),
        lambda s: s.replace("[initial]", "[start]"),
    ])
    def test_malformed_rejected(self, mutate):
        with pytest.raises(ConfigError):
            parse_scenario(mutate(SHORT_UNICYCLE))

    def test_unknown_reference_rejected(self):
        with pytest.raises(ConfigError):
            load_scenario("no-such-scenario")

    def test_spacecraft_explicit_matrix(self):
        text = BUILTINS["spacecraft-rest-to-rest"].replace("rotvec = 0, 0, 2.0",
                                                          "R = 1,0,0, 0,1,0, 0,0,1")
        assert np.array_equal(parse_scenario(text).initial_state().g.m, np.eye(3))
        with pytest.raises(ConfigError):
            parse_scenario(text.replace("R = 1,0,0", "R = 2,0,0"))

    def test_hash_ignores_formatting(self):
        a = parse_scenario(SHORT_UNICYCLE)
        b = parse_scenario(SHORT_UNICYCLE.replace("lambda = 1.5", "lambda=1.5   ") + "\n\n")
        c = parse_scenario(SHORT_UNICYCLE.replace("lambda = 1.5", "lambda = 1.6"))
        assert a.config_hash == b.config_hash != c.config_hash
        assert canonical_text("[b]\ny=1\nx=2\n[a]\nz=3\n") == "[a]\nz=3\n[b]\nx=2\ny=1\n"

    def test_table_desired(self, tmp_path):
        t = np.linspace(0, 10, 41)
        np.savetxt(tmp_path / "path.csv", np.c_[t, 0.2 * t, 0.1 * t], delimiter=",",
                   header="t,x,y")
        text = SHORT_UNICYCLE.replace("type = lemniscate", "type = table\nfile = path.csv")
        ini = tmp_path / "table.ini"
        ini.write_text(text)
        scn = load_scenario(str(ini))
        g, xi, _ = scn.build_desired()(2.0)
        assert g.x == pytest.approx(0.4) and g.y == pytest.approx(0.2)
        assert xi[0] == pytest.approx(math.hypot(0.2, 0.1))
        (tmp_path / "path.csv").unlink()
        with pytest.raises(ConfigError):
            load_scenario(str(ini))


def synthetic_samples(err, system="unicycle"):
    out = []
    for i, e in enumerate(err):
        pose = (0.0, 0.0, 0.0) if system == "unicycle" else tuple(np.eye(3).ravel())
        tau = (0.0,) * (2 if system == "unicycle" else 3)
        out.append(TrajectorySample(0.1 * i, pose, pose, e, e, e, tau, e * e, e * e, 0.0))
    return out


class TestReport:
    def test_roundtrip(self, tmp_path):
        res = run_scenario(parse_scenario(SHORT_UNICYCLE, "short"))
        path = tmp_path / "run.csv"
        n = write_trajectory_csv(path, res.samples, "unicycle", "short", "abc")
        traj = read_trajectory_csv(path)
        assert n == len(res.samples) == 51
        assert traj.system == "unicycle" and traj.columns == SCHEMAS["unicycle"]
        assert traj.meta["scenario"] == "short" and traj.meta["config_sha256"] == "abc"
        np.testing.assert_array_equal(traj["t"], [s.t for s in res.samples])
        np.testing.assert_array_equal(traj["lyapunov_W"], [s.lyapunov_W for s in res.samples])

    def test_run_is_deterministic(self, tmp_path):
        digests = []
        for k in range(2):
            scn = parse_scenario(SHORT_UNICYCLE, "short")
            path = tmp_path / f"run{k}.csv"
            write_trajectory_csv(path, run_scenario(scn).samples, "unicycle", scn.name, scn.config_hash)
            digests.append(hashlib.sha256(path.read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_spacecraft_schema(self, tmp_path):
        path = tmp_path / "sc.csv"
        write_trajectory_csv(path, synthetic_samples([0.5, 0.1, 0.0], "spacecraft"), "spacecraft", "s", "h")
        traj = read_trajectory_csv(path)
        assert traj.system == "spacecraft" and len(traj.columns) == 29

    @pytest.mark.parametrize("damage", [
        lambda lines: lines[:-1],                                  # no end marker
        lambda lines: lines[:-2] + lines[-1:],                     # row count mismatch
        lambda lines: lines[:6] + [lines[6].replace("0", "x", 1)] + lines[7:],
        lambda lines: lines[:5] + [lines[6], lines[5]] + lines[7:],  # time goes backwards
        lambda lines: [ln.replace("t,x,y", "t,u,y") for ln in lines],
        lambda lines: lines[:6] + [lines[6][: len(lines[6]) // 2]] + lines[7:],
    ])
    def test_damaged_files_rejected(self, tmp_path, damage):
        path = tmp_path / "ok.csv"
        write_trajectory_csv(path, synthetic_samples([0.3, 0.2, 0.1, 0.0]), "unicycle", "s", "h")
        lines = path.read_text().splitlines()
        bad = tmp_path / "bad.csv"
        bad.write_text("\n".join(damage(lines)) + "\n")
        with pytest.raises(SchemaError):
            read_trajectory_csv(bad)

    def test_negative_error_rejected(self, tmp_path):
        path = tmp_path / "neg.csv"
        write_trajectory_csv(path, synthetic_samples([0.3, -0.1]), "unicycle", "s", "h")
        with pytest.raises(SchemaError):
            read_trajectory_csv(path)


class TestMetrics:
    def test_zero_error_settles_at_zero(self, tmp_path):
        path = tmp_path / "zero.csv"
        write_trajectory_csv(path, synthetic_samples([0.0] * 20), "unicycle", "s", "h")
        m = compute_metrics(read_trajectory_csv(path))
        assert m.settling_time == 0.0 and m.final_err == 0.0 and m.rows == 20
        assert math.isnan(m.lyapunov_rate)

    def test_settling_time_rules(self):
        t = np.arange(5.0)
        assert settling_time(t, np.array([1, 0.01, 1, 0.01, 0.0])) == 3.0
        assert settling_time(t, np.array([1, 1, 1, 1, 1.0])) == math.inf
        assert settling_time(t, np.array([0.05, 0.049, 0, 0, 0])) == 1.0

    def test_log_slope_exact_exponential(self):
        t = np.linspace(0, 10, 101)
        assert log_slope(t, 3 * np.exp(-0.7 * t)) == pytest.approx(-0.7)
        assert math.isnan(log_slope(t, np.zeros_like(t)))

    def test_lines_mention_every_metric(self, tmp_path):
        path = tmp_path / "m.csv"
        write_trajectory_csv(path, synthetic_samples(np.exp(-np.arange(30.0))), "unicycle", "s", "h")
        text = "\n".join(compute_metrics(read_trajectory_csv(path)).lines())
        for key in ("settling_time", "lyapunov_rate", "peak_tau_norm", "final_err_frobenius"):
            assert key in text


class TestPlotting:
    def test_png_and_script(self, tmp_path):
        path = tmp_path / "p.csv"
        write_trajectory_csv(path, synthetic_samples(np.exp(-np.arange(30.0))), "unicycle", "s", "h")
        render_panels(read_trajectory_csv(path), tmp_path / "a.png", title="s")
        assert (tmp_path / "a.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        script = tmp_path / "p_plot.py"
        script.write_text(plot_script_text("p.csv", "b.png"))
        proc = subprocess.run([sys.executable, str(script)], cwd=tmp_path, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "b.png").stat().st_size > 1000


class TestBuiltinRuns:
    def test_rest_to_rest_morse_monotone_after_transient(self):
        scn = load_scenario("spacecraft-rest-to-rest")
        scn.integrator = IntegratorConfig(h=5e-3, t_end=30.0, log_stride=1)
        res = run_scenario(scn)
        V = np.array([s.morse_V for s in res.samples])
        assert V[0] == pytest.approx(2 - 2 * math.cos(1.0))
        assert np.max(np.diff(V)) < 1e-12
        assert V[-1] < 1e-10
        assert isinstance(res.final_state.g, Rotation3)

    def test_initial_override(self):
        scn = parse_scenario(SHORT_UNICYCLE)
        start = scn.initial_state().replace(g=PoseSE2(0.5, 0.0, 1.0))
        res = run_scenario(scn, initial=start)
        assert res.samples[0].pose == (0.5, 0.0, 1.0)


def test_readme_example_parses():
    text = (Path(__file__).resolve().parents[1] / "README.md").read_text()
    ini = re.search(r"```ini\n(.*?)```", text, re.S).group(1)
    scn = parse_scenario(ini)
    assert scn.system_type == "unicycle" and scn.integrator.method == "rk4_cg"
    assert parse_scenario(ini.replace("; or lie_euler", "")).config_hash == scn.config_hash
