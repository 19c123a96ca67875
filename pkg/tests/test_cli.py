"""Config parsing and command-line workflow tests.

End-to-end runs go through cli.main with real files in tmp_path; the
assertions pin the documented exit codes, header layout, and rerun
byte-identity (modulo the timestamp line)."""

import json

import numpy as np
import pytest

from cooplyap import ConfigError, build_environment, parse_config, with_overrides
from cooplyap.cli import main

ESTIMATE_YAML = """
command: estimate
environment:
  kind: periodic
  fourier:
    A0: [[1.0, 2.0], [3.0, 0.0]]
numerics:
  horizon: 50.0
  step: 0.001
  burn_in: 5.0
method: ErgodicAverage
output:
  path: {path}
"""

MARKOV_YAML = """
command: estimate
environment:
  kind: markov_switch
  rates: [[-1.0, 1.0], [1.0, -1.0]]
  matrices:
    - [[-1.0, 10.0], [0.0, -1.0]]
    - [[-1.0, 0.0], [10.0, -1.0]]
  timescale: 0.001
numerics:
  horizon: 50.0
  step: 0.001
seed: 99
output:
  path: {path}
"""


def write_config(tmp_path, text, name="config.yaml", **fields):
    p = tmp_path / name
    p.write_text(text.format(**fields))
    return p


def strip_timestamp(text):
    return "\n".join(
        ln for ln in text.split("\n") if not ln.startswith("# timestamp:")
    )


class TestParseConfig:
    def test_happy_path(self, tmp_path):
        cfg_path = write_config(tmp_path, ESTIMATE_YAML, path=str(tmp_path / "out.csv"))
        cfg = parse_config(cfg_path.read_text())
        assert cfg.command == "estimate"
        assert cfg.method == "ErgodicAverage"
        assert cfg.numerics["horizon"] == 50.0
        spec = build_environment(cfg)
        assert spec.dim == 2
        assert spec.timescale == 1.0

    def test_canonical_json_round_trip(self, tmp_path):
        cfg_path = write_config(tmp_path, MARKOV_YAML, path=str(tmp_path / "out.csv"))
        cfg = parse_config(cfg_path.read_text())
        echoed = tmp_path / "echo.yaml"
        echoed.write_text(cfg.canonical_json())
        # JSON is a YAML subset, so the echo reparses to the same config
        assert parse_config(echoed.read_text()) == cfg

    def test_error_names_offending_key(self, tmp_path):
        bad = ESTIMATE_YAML.replace("step: 0.001", "step: -0.5")
        cfg_path = write_config(tmp_path, bad, path="out.csv")
        with pytest.raises(ConfigError, match="numerics.step"):
            parse_config(cfg_path.read_text())

    def test_step_horizon_ratio_enforced(self, tmp_path):
        bad = ESTIMATE_YAML.replace("step: 0.001", "step: 10.0")
        cfg_path = write_config(tmp_path, bad, path="out.csv")
        with pytest.raises(ConfigError, match="horizon/10"):
            parse_config(cfg_path.read_text())

    def test_unknown_keys_rejected(self, tmp_path):
        cfg_path = write_config(
            tmp_path, ESTIMATE_YAML + "\nextra_section: 1\n", path="out.csv"
        )
        with pytest.raises(ConfigError, match="extra_section"):
            parse_config(cfg_path.read_text())

    def test_missing_fourier_base(self, tmp_path):
        bad = ESTIMATE_YAML.replace("    A0: [[1.0, 2.0], [3.0, 0.0]]", "    C1: [[0.0, 0.1], [0.1, 0.0]]")
        cfg_path = write_config(tmp_path, bad, path="out.csv")
        with pytest.raises(ConfigError, match="fourier.A0"):
            parse_config(cfg_path.read_text())

    def test_seed_required_for_stochastic_estimate(self, tmp_path):
        bad = MARKOV_YAML.replace("seed: 99\n", "")
        cfg_path = write_config(tmp_path, bad, path="out.csv")
        with pytest.raises(ConfigError, match="seed"):
            parse_config(cfg_path.read_text())

    def test_sweep_block_only_for_sweep(self, tmp_path):
        bad = ESTIMATE_YAML + "\nsweep:\n  T_min: 0.1\n  T_max: 10.0\n"
        cfg_path = write_config(tmp_path, bad, path="out.csv")
        with pytest.raises(ConfigError, match="sweep"):
            parse_config(cfg_path.read_text())

    def test_method_only_for_estimate(self, tmp_path):
        bad = ESTIMATE_YAML.replace("command: estimate", "command: bounds")
        cfg_path = write_config(tmp_path, bad, path="out.csv")
        with pytest.raises(ConfigError, match="method"):
            parse_config(cfg_path.read_text())

    def test_yaml_syntax_error_carries_location(self, tmp_path):
        cfg_path = tmp_path / "broken.yaml"
        cfg_path.write_text("command: [estimate\n")
        with pytest.raises(ConfigError, match="line"):
            parse_config(cfg_path.read_text())

    def test_with_overrides_revalidates(self, tmp_path):
        cfg_path = write_config(tmp_path, ESTIMATE_YAML, path=str(tmp_path / "out.csv"))
        cfg = parse_config(cfg_path.read_text())
        alt = with_overrides(cfg, seed=5, output_path="elsewhere.csv")
        assert alt.seed == 5
        assert alt.output["path"] == "elsewhere.csv"
        # switching command to sweep without a sweep block must fail loudly
        with pytest.raises(ConfigError, match="sweep"):
            with_overrides(cfg, command="sweep")


class TestCliRuns:
    def run_ok(self, argv, capsys):
        code = main(argv)
        out = capsys.readouterr()
        assert code == 0, out.err
        return out.out

    def test_estimate_csv(self, tmp_path, capsys):
        out_path = tmp_path / "est.csv"
        cfg = write_config(tmp_path, ESTIMATE_YAML, path=str(out_path))
        stdout = self.run_ok(["estimate", "--config", str(cfg)], capsys)
        assert str(out_path) in stdout
        text = out_path.read_text()
        lines = text.strip().split("\n")
        assert lines[0].startswith("# command: estimate")
        header_idx = next(i for i, ln in enumerate(lines) if not ln.startswith("#"))
        assert lines[header_idx] == "value,method,horizon,step,burn_in,half_split_gap,seed"
        row = lines[header_idx + 1].split(",")
        assert float(row[0]) == pytest.approx(3.0, abs=1e-3)
        assert row[1] == "ErgodicAverage"
        assert row[6] == ""  # deterministic run has no seed

    def test_estimate_json_with_trajectory(self, tmp_path, capsys):
        out_path = tmp_path / "est.json"
        traj_path = tmp_path / "traj.csv"
        yaml_text = ESTIMATE_YAML.replace(
            "output:\n  path: {path}\n",
            "output:\n  path: {path}\n  format: json\n  trajectory_path: "
            + str(traj_path)
            + "\n",
        )
        cfg = write_config(tmp_path, yaml_text, path=str(out_path))
        self.run_ok(["estimate", "--config", str(cfg)], capsys)
        doc = json.loads(out_path.read_text())
        assert set(doc) == {"metadata", "result"}
        assert doc["metadata"]["command"] == "estimate"
        assert doc["result"]["value"] == pytest.approx(3.0, abs=1e-3)
        # the config echo reparses to an equivalent config
        echo = tmp_path / "echo.json"
        echo.write_text(json.dumps(doc["metadata"]["config"]))
        assert parse_config(echo.read_text()) == parse_config(cfg.read_text())
        traj = traj_path.read_text().strip().split("\n")
        header_idx = next(i for i, ln in enumerate(traj) if not ln.startswith("#"))
        assert traj[header_idx] == "time,theta_1,theta_2,log_rho,running_avg"
        final = traj[-1].split(",")
        assert float(final[0]) == pytest.approx(50.0)
        assert float(final[1]) == pytest.approx(0.5, abs=1e-9)

    def test_rerun_is_byte_identical_except_timestamp(self, tmp_path, capsys):
        out_path = tmp_path / "est.csv"
        cfg = write_config(tmp_path, MARKOV_YAML, path=str(out_path))
        self.run_ok(["estimate", "--config", str(cfg)], capsys)
        first = out_path.read_text()
        self.run_ok(["estimate", "--config", str(cfg)], capsys)
        second = out_path.read_text()
        assert strip_timestamp(first) == strip_timestamp(second)
        assert "# seed: 99" in first

    def test_seed_flag_changes_stochastic_result(self, tmp_path, capsys):
        out_path = tmp_path / "est.csv"
        cfg = write_config(tmp_path, MARKOV_YAML, path=str(out_path))
        self.run_ok(["estimate", "--config", str(cfg)], capsys)
        base = out_path.read_text()
        self.run_ok(["estimate", "--config", str(cfg), "--seed", "100"], capsys)
        other = out_path.read_text()
        assert strip_timestamp(base) != strip_timestamp(other)
        assert "# seed: 100" in other

    def test_output_flag_overrides_path(self, tmp_path, capsys):
        cfg = write_config(tmp_path, ESTIMATE_YAML, path=str(tmp_path / "a.csv"))
        target = tmp_path / "b.csv"
        self.run_ok(["estimate", "--config", str(cfg), "--output", str(target)], capsys)
        assert target.exists()
        assert not (tmp_path / "a.csv").exists()

    def test_bounds_command(self, tmp_path, capsys):
        out_path = tmp_path / "bounds.csv"
        yaml_text = (
            ESTIMATE_YAML.replace("command: estimate", "command: bounds")
            .replace("method: ErgodicAverage\n", "")
            .replace("numerics:\n  horizon: 50.0\n  step: 0.001\n  burn_in: 5.0\n", "")
        )
        cfg = write_config(tmp_path, yaml_text, path=str(out_path))
        self.run_ok(["bounds", "--config", str(cfg)], capsys)
        lines = out_path.read_text().strip().split("\n")
        header_idx = next(i for i, ln in enumerate(lines) if not ln.startswith("#"))
        assert lines[header_idx] == (
            "column_sum_lower,column_sum_upper,symmetric_lower,symmetric_upper"
        )
        row = [float(v) for v in lines[header_idx + 1].split(",")]
        assert row[0] == pytest.approx(2.0, abs=1e-9)
        assert row[1] == pytest.approx(4.0, abs=1e-9)

    def test_periodic_exact_and_floquet(self, tmp_path, capsys):
        for command in ("periodic-exact", "floquet"):
            out_path = tmp_path / f"{command}.csv"
            yaml_text = (
                ESTIMATE_YAML.replace("command: estimate", f"command: {command}")
                .replace("method: ErgodicAverage\n", "")
                .replace("  horizon: 50.0\n", "")
                .replace("  burn_in: 5.0\n", "")
            )
            cfg = write_config(
                tmp_path, yaml_text, name=f"{command}.yaml", path=str(out_path)
            )
            self.run_ok([command, "--config", str(cfg)], capsys)
            lines = out_path.read_text().strip().split("\n")
            header_idx = next(i for i, ln in enumerate(lines) if not ln.startswith("#"))
            row = lines[header_idx + 1].split(",")
            assert float(row[0]) == pytest.approx(3.0, abs=1e-8)

    def test_sweep_command(self, tmp_path, capsys):
        out_path = tmp_path / "sweep.csv"
        yaml_text = """
command: sweep
environment:
  kind: markov_switch
  rates: [[-1.0, 1.0], [1.0, -1.0]]
  matrices:
    - [[-1.0, 10.0], [0.0, -1.0]]
    - [[-1.0, 0.0], [10.0, -1.0]]
numerics:
  horizon: 30.0
  step: 0.01
sweep:
  T_min: 0.01
  T_max: 1.0
  points_per_decade: 1
seed: 12
output:
  path: {path}
"""
        cfg = write_config(tmp_path, yaml_text, path=str(out_path))
        self.run_ok(["sweep", "--config", str(cfg)], capsys)
        lines = out_path.read_text().strip().split("\n")
        header_idx = next(i for i, ln in enumerate(lines) if not ln.startswith("#"))
        assert lines[header_idx].startswith("T,lambda_hat,half_split_gap")
        rows = lines[header_idx + 1 :]
        assert len(rows) == 3
        assert float(rows[0].split(",")[0]) == pytest.approx(0.01)

    def test_contraction_command(self, tmp_path, capsys):
        out_path = tmp_path / "contraction.csv"
        yaml_text = ESTIMATE_YAML.replace("command: estimate", "command: contraction").replace(
            "method: ErgodicAverage\n", ""
        )
        cfg = write_config(tmp_path, yaml_text, path=str(out_path))
        self.run_ok(["contraction", "--config", str(cfg)], capsys)
        lines = out_path.read_text().strip().split("\n")
        header_idx = next(i for i, ln in enumerate(lines) if not ln.startswith("#"))
        assert lines[header_idx] == "first_positive_time,empirical_rate"
        row = lines[header_idx + 1].split(",")
        assert float(row[0]) > 0.0
        assert float(row[1]) < 0.0

    def test_concentration_command(self, tmp_path, capsys):
        out_path = tmp_path / "conc.csv"
        yaml_text = (
            MARKOV_YAML.replace("command: estimate", "command: concentration")
            .replace("  timescale: 0.001\n", "  timescale: 0.01\n")
        )
        cfg = write_config(tmp_path, yaml_text, path=str(out_path))
        self.run_ok(["concentration", "--config", str(cfg)], capsys)
        lines = out_path.read_text().strip().split("\n")
        header_idx = next(i for i, ln in enumerate(lines) if not ln.startswith("#"))
        assert lines[header_idx] == "T,concentration,horizon,step,burn_in,seed"
        row = lines[header_idx + 1].split(",")
        assert float(row[0]) == pytest.approx(0.01)
        assert 0.0 <= float(row[1]) <= 0.2


class TestExitCodes:
    def read_error(self, capsys):
        err = capsys.readouterr().err.strip().split("\n")[-1]
        return json.loads(err)

    def test_config_error_is_2(self, tmp_path, capsys):
        bad = ESTIMATE_YAML.replace("step: 0.001", "step: -1.0")
        cfg = write_config(tmp_path, bad, path="out.csv")
        assert main(["estimate", "--config", str(cfg)]) == 2
        doc = self.read_error(capsys)
        assert doc["exit_code"] == 2
        assert "numerics.step" in doc["message"]

    def test_assumption_violation_is_3(self, tmp_path, capsys):
        bad = MARKOV_YAML.replace(
            "rates: [[-1.0, 1.0], [1.0, -1.0]]", "rates: [[0.0, 0.0], [1.0, -1.0]]"
        )
        cfg = write_config(tmp_path, bad, path=str(tmp_path / "out.csv"))
        assert main(["estimate", "--config", str(cfg)]) == 3
        assert self.read_error(capsys)["exit_code"] == 3

    def test_numerical_failure_is_4(self, tmp_path, capsys):
        # reducible periodic system: the fixed-point route cannot contract
        yaml_text = """
command: periodic-exact
environment:
  kind: periodic
  fourier:
    A0: [[1.0, 0.0], [10.0, 1.0]]
numerics:
  step: 0.25
output:
  path: {path}
"""
        cfg = write_config(tmp_path, yaml_text, path=str(tmp_path / "out.csv"))
        assert main(["periodic-exact", "--config", str(cfg)]) == 4
        assert self.read_error(capsys)["exit_code"] == 4

    def test_missing_config_file_is_5(self, tmp_path, capsys):
        assert main(["estimate", "--config", str(tmp_path / "nope.yaml")]) == 5
        assert self.read_error(capsys)["exit_code"] == 5

    def test_unwritable_output_is_5(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path, ESTIMATE_YAML, path=str(tmp_path / "no_dir" / "deep" / "out.csv")
        )
        assert main(["estimate", "--config", str(cfg)]) == 5

    def test_negative_rate_names_entry(self, tmp_path, capsys):
        bad = MARKOV_YAML.replace(
            "rates: [[-1.0, 1.0], [1.0, -1.0]]", "rates: [[1.0, -1.0], [1.0, -1.0]]"
        )
        cfg = write_config(tmp_path, bad, path=str(tmp_path / "out.csv"))
        assert main(["estimate", "--config", str(cfg)]) == 2
        assert "(1,2)" in self.read_error(capsys)["message"]


class TestHelp:
    def test_help_documents_config_keys(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--help"])
        assert info.value.code == 0
        text = capsys.readouterr().out
        assert "environment.kind" in text
        assert "output.path" in text
