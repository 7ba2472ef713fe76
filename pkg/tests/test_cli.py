"""Config parsing, subcommand pipelines, determinism, exit codes."""

import hashlib
import json
import os

import numpy as np
import pytest

from singlewell.cli import main
from singlewell.config import load_config, parse_regime, validate_config
from singlewell.errors import ConfigError

GROUND_CFG = """\
[potential]
v = (x-1)^2
length = 2.0

[schedule]
eps = 0.1, 0.05

[run]
regime = ground
window = 1.8, 2.0
alpha = 0.3
out_dir = {out}
seed = 7

[verdict]
x = 0.02
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def digests(out_dir):
    out = {}
    for name in sorted(os.listdir(out_dir)):
        if name.endswith(".csv"):
            with open(os.path.join(out_dir, name), "rb") as fh:
                out[name] = hashlib.sha256(fh.read()).hexdigest()
    return out


class TestConfigParsing:
    def test_full_roundtrip(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path, GROUND_CFG.format(out=tmp_path)))
        assert cfg.potential_expr == "(x-1)^2"
        assert cfg.schedule == [0.1, 0.05]
        assert cfg.window == (1.8, 2.0)
        assert cfg.tolerances == {"x": 0.02}
        assert cfg.seed == 7

    def test_geometric_schedule(self, tmp_path):
        text = ("[potential]\nv = (x-1)^2\nlength = 2\n"
                "[schedule]\neps_max = 0.1\nratio = 0.5\ncount = 3\n")
        cfg = load_config(write_cfg(tmp_path, text))
        assert cfg.schedule == pytest.approx([0.1, 0.05, 0.025])

    def test_missing_potential(self, tmp_path):
        with pytest.raises(ConfigError, match=r"\[potential\] V"):
            load_config(write_cfg(tmp_path, "[potential]\nlength = 2\n"
                                            "[schedule]\neps = 0.1\n"))

    def test_increasing_schedule_rejected(self, tmp_path):
        text = "[potential]\nv = (x-1)^2\nlength = 2\n[schedule]\neps = 0.05, 0.1\n"
        with pytest.raises(ConfigError, match="decreasing"):
            load_config(write_cfg(tmp_path, text))

    def test_grid_rule_violation_names_eps(self, tmp_path):
        text = ("[potential]\nv = (x-1)^2\nlength = 2\n"
                "[schedule]\neps = 0.1, 0.001\n[run]\ngrid = 100\n")
        with pytest.raises(ConfigError, match="0.001"):
            load_config(write_cfg(tmp_path, text))

    def test_interior_requires_e_star(self, tmp_path):
        text = ("[potential]\nv = (x-1)^2\nlength = 2\n"
                "[schedule]\neps = 0.1\n[run]\nregime = interior=0.25\n")
        cfg = load_config(write_cfg(tmp_path, text))
        assert cfg.regime == "interior" and cfg.e_star == 0.25
        assert parse_regime("ground") == ("ground", None)
        with pytest.raises(ConfigError):
            parse_regime("sideways")

    def test_bad_window(self, tmp_path):
        text = ("[potential]\nv = (x-1)^2\nlength = 2\n[schedule]\neps = 0.1\n"
                "[run]\nwindow = 1.5, 1.0\n")
        with pytest.raises(ConfigError, match="window"):
            load_config(write_cfg(tmp_path, text))

    def test_unreadable_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/path.cfg")


class TestPipelines:
    def test_report_smoke(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["report", "--config",
                     write_cfg(tmp_path, GROUND_CFG.format(out=out))])
        assert code == 0
        csvs = sorted(p for p in os.listdir(out) if p.endswith(".csv"))
        assert csvs == ["agmon_profile.csv", "bounds.csv", "measure.csv",
                        "spectrum.csv", "verdicts.csv"]
        figures = sorted(p for p in os.listdir(out) if p.endswith(".png"))
        assert figures == ["bounds_exponents.png", "decay_envelope.png",
                           "measure_convergence.png"]
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["tool_version"]
        assert {o["path"] for o in manifest["outputs"]} >= set(csvs)
        assert all(len(o["sha256"]) == 64 for o in manifest["outputs"])

    def test_determinism_byte_identical(self, tmp_path):
        out = tmp_path / "det"
        cfg = write_cfg(tmp_path, GROUND_CFG.format(out=out))
        assert main(["report", "--config", cfg]) == 0
        first = digests(out)
        assert main(["report", "--config", cfg]) == 0
        second = digests(out)
        assert first == second and len(first) == 5

    def test_floats_round_trip_exactly(self, tmp_path):
        out = tmp_path / "rt"
        cfg = write_cfg(tmp_path, GROUND_CFG.format(out=out))
        main(["report", "--config", cfg])
        lines = (out / "spectrum.csv").read_text().splitlines()
        for line in lines[1:]:
            for tok in line.split(",")[1:]:
                assert format(float(tok), ".17g") == tok

    def test_verdict_failure_exits_2(self, tmp_path):
        text = GROUND_CFG.format(out=tmp_path / "fail") + "x^2 = 1e-30\n"
        code = main(["report", "--config", write_cfg(tmp_path, text)])
        assert code == 2

    def test_config_error_exits_1(self, tmp_path, capsys):
        text = "[potential]\nv = (x-1)^2\nlength = 2\n[schedule]\neps = 0.05, 0.1\n"
        code = main(["report", "--config", write_cfg(tmp_path, text)])
        assert code == 1
        assert "error: ConfigError" in capsys.readouterr().err

    def test_spectrum_csv_schema(self, tmp_path):
        out = tmp_path / "spec"
        code = main(["spectrum", "--out-dir", str(out), "--schedule", "0.05",
                     "--count", "3"])
        assert code == 0
        header = (out / "spectrum.csv").read_text().splitlines()[0]
        assert header == "k,E,residual,dpsi0,dpsiL"

    def test_agmon_csv_schema(self, tmp_path):
        out = tmp_path / "agm"
        code = main(["agmon", "--out-dir", str(out), "--energy", "0.25",
                     "--n", "64"])
        assert code == 0
        lines = (out / "agmon.csv").read_text().splitlines()
        assert lines[0] == "x,E,d_A"
        assert len(lines) == 65

    def test_eigen_csv(self, tmp_path):
        out = tmp_path / "eig"
        code = main(["eigen", "--out-dir", str(out), "--schedule", "0.1",
                     "--k", "1"])
        assert code == 0
        lines = (out / "eigen.csv").read_text().splitlines()
        assert lines[0] == "x,psi"
        first = [float(t) for t in lines[1].split(",")]
        last = [float(t) for t in lines[-1].split(",")]
        assert first == [0.0, 0.0] and last[0] == 2.0 and last[1] == 0.0

    def test_measure_csv_schema(self, tmp_path):
        out = tmp_path / "meas"
        code = main(["measure", "--out-dir", str(out),
                     "--schedule", "0.1,0.05", "--regime", "interior=0.25"])
        assert code in (0, 2)  # verdicts judged; schema is what we check
        header = (out / "measure.csv").read_text().splitlines()[0]
        assert header == ("eps,E,phi_name,empirical,predicted,abs_err,"
                          "trace0_emp,trace0_pred,traceL_emp,traceL_pred")

    def test_husimi_pipeline(self, tmp_path):
        out = tmp_path / "hus"
        code = main(["husimi", "--out-dir", str(out), "--schedule", "0.05",
                     "--regime", "interior=0.25"])
        assert code == 0
        header = (out / "husimi.csv").read_text().splitlines()[0]
        assert header == "x,xi,H"

    def test_bounds_pipeline(self, tmp_path):
        out = tmp_path / "bnd"
        code = main(["bounds", "--out-dir", str(out),
                     "--schedule", "0.05,0.025", "--window", "1.8,2.0",
                     "--alpha", "0.3"])
        assert code == 0
        header = (out / "bounds.csv").read_text().splitlines()[0]
        assert header == ("eps,E,delta_upper,delta_lower,tunneling_margin,"
                          "gronwall_margin,verdict")

    def test_out_dir_env_override(self, tmp_path, monkeypatch):
        target = tmp_path / "env_out"
        monkeypatch.setenv("SINGLEWELL_OUT", str(target))
        code = main(["agmon", "--out-dir", str(tmp_path / "ignored"),
                     "--energy", "0.25", "--n", "64"])
        assert code == 0
        assert (target / "agmon.csv").exists()
        assert not (tmp_path / "ignored").exists()

    def test_config_overrides_flags(self, tmp_path):
        out_cfg = tmp_path / "from_config"
        cfg = write_cfg(tmp_path, GROUND_CFG.format(out=out_cfg))
        code = main(["report", "--config", cfg,
                     "--out-dir", str(tmp_path / "from_flag")])
        assert code == 0
        assert out_cfg.exists()
        assert not (tmp_path / "from_flag").exists()


class TestWorkers:
    def test_parallel_battery_matches_serial(self, tmp_path):
        serial_out = tmp_path / "serial"
        parallel_out = tmp_path / "parallel"
        for out, workers in ((serial_out, 1), (parallel_out, 3)):
            text = GROUND_CFG.format(out=out) + f"\n[DEFAULT]\n"
            text = text.replace("seed = 7", f"seed = 7\nworkers = {workers}")
            assert main(["report", "--config",
                         write_cfg(tmp_path, text, f"w{workers}.cfg")]) == 0
        assert digests(serial_out) == digests(parallel_out)
