import json
import subprocess
import sys

import pytest

from cohentropy.cli import main
from cohentropy.scenarios import CSV_HEADER, config_from_json, parse_config
from cohentropy.exceptions import ConfigError


def write_config(tmp_path, name="config.json", **overrides):
    cfg = {"scenario": "heat-flow-reversal", "beta_0": 1.1, "beta_B": 1.0,
           "time_grid": {"t_min": 0.1, "t_max": 50.0, "points": 12}}
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


class TestConfigParsing:
    def test_shipped_configs_parse(self):
        from pathlib import Path
        configs = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
        assert len(configs) >= 5
        for path in configs:
            cfg = config_from_json(path.read_text())
            assert cfg.scenario

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            parse_config({"scenario": "custom", "gama": 0.1})

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            parse_config({"scenario": "custom", "time_grid": {"tmin": 0.1}})

    def test_negative_gamma_rejected(self):
        with pytest.raises(ConfigError):
            parse_config({"scenario": "custom", "gamma": -0.1})

    def test_budget_enforced(self):
        with pytest.raises(ConfigError, match="budget"):
            parse_config({"scenario": "collective-spins", "n": 8, "s": 0.5})

    def test_invalid_json(self):
        with pytest.raises(ConfigError, match="JSON"):
            config_from_json("{not json")


class TestRunCommand:
    def test_reversal_run_writes_outputs(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "out"
        code = main(["run", str(cfg), "--out", str(out)])
        assert code == 0
        csv_text = (out / "timeseries.csv").read_text()
        assert csv_text.splitlines()[0] == CSV_HEADER
        summary = (out / "summary.txt").read_text()
        assert "heat_flow_reversed: yes" in summary
        assert "iii_reversal_bound: pass" in summary

    def test_malformed_config_exits_1_without_outputs(self, tmp_path):
        cfg = write_config(tmp_path, gamma=-0.5)
        out = tmp_path / "out"
        code = main(["run", str(cfg), "--out", str(out)])
        assert code == 1
        assert not (out / "timeseries.csv").exists()
        assert not (out / "summary.txt").exists()

    def test_missing_config_exits_1(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 1

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["run", str(cfg), "--out", str(out)]) == 0
            outs.append((out / "timeseries.csv").read_bytes() + (out / "summary.txt").read_bytes())
        assert outs[0] == outs[1]

    def test_thermal_operation_run(self, tmp_path):
        cfg = write_config(
            tmp_path, scenario="thermal-operation", beta_0=0.7, beta_B=1.3, seeds=24
        )
        out = tmp_path / "ops"
        code = main(["run", str(cfg), "--out", str(out), "--threads", "2"])
        assert code == 0
        summary = (out / "summary.txt").read_text()
        assert "conservation laws: qubit*qubit" in summary
        assert "conservation laws: qutrit*qubit" in summary
        assert "24/24 pass" in summary
        csv_text = (out / "timeseries.csv").read_text()
        assert "finite-operation" in csv_text

    def test_csv_has_17_significant_digits(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "digits"
        assert main(["run", str(cfg), "--out", str(out)]) == 0
        line = (out / "timeseries.csv").read_text().splitlines()[2]
        entry = line.split(",")[1]  # entropy column: irrational value
        mantissa = entry.replace("-", "").replace(".", "").split("e")[0].lstrip("0")
        assert len(mantissa) == 17

    def test_output_independent_of_thread_count(self):
        from cohentropy.scenarios import ScenarioConfig, run_thermal_operation_scenario
        cfg = ScenarioConfig(scenario="thermal-operation", beta_0=0.7, beta_B=1.3, seeds=16)
        serial = run_thermal_operation_scenario(cfg, threads=1)
        parallel = run_thermal_operation_scenario(cfg, threads=4)
        assert serial.csv_text == parallel.csv_text
        assert serial.summary_text == parallel.summary_text

    def test_collective_run_sweep_table(self, tmp_path):
        cfg = write_config(
            tmp_path, scenario="collective-spins", beta_0=50.0, beta_B=1.0,
            sweep={"minimum": 0.1, "maximum": 6.0, "points": 7},
        )
        out = tmp_path / "coll"
        assert main(["run", str(cfg), "--out", str(out)]) == 0
        summary = (out / "summary.txt").read_text()
        assert "beta_B_omega,Pi_th,Pi_col,ratio" in summary
        assert "ratio_within_5_percent: pass" in summary


class TestVerifyCommand:
    def test_installed_entry_point_perturbed(self):
        """Tolerance injection must flip the targeted criterion to FAIL (exit 2)."""
        proc = subprocess.run(
            [sys.executable, "-m", "cohentropy.cli", "verify", "--threads", "4",
             "--perturb", "5"],
            capture_output=True, text=True, timeout=600,
        )
        assert proc.returncode == 2
        lines = [l for l in proc.stdout.splitlines() if "criterion  5" in l]
        assert lines and lines[0].startswith("[FAIL]")
        assert sum(1 for l in proc.stdout.splitlines() if l.startswith("[")) == 14
