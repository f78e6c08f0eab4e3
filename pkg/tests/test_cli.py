"""CLI presets, exit codes, config round-trips, and output determinism."""
import json

import numpy as np
import pytest

from heavyball_lab.cli import (
    ExperimentConfig,
    main,
    parse_config_text,
    validate,
)
from heavyball_lab.errors import ConfigError
from heavyball_lab.example_xy import ExampleInit, envelope_constants


def run_cli(args):
    return main(list(args))


class TestValidate:
    def test_default_echoes_envelope_constants(self):
        config, echo = validate(ExperimentConfig(preset="figure1"))
        env = envelope_constants(ExampleInit())
        for key in ("c1", "c2", "c3", "r1", "r2", "r3", "r4", "r5", "r6"):
            assert echo["envelope"][key] == pytest.approx(getattr(env, key),
                                                          rel=1e-15)

    def test_negative_gamma_rejected(self):
        with pytest.raises(ConfigError, match="gamma must be positive"):
            validate(ExperimentConfig(gamma=-1.0))

    def test_objective_defaults_to_xy(self):
        assert ExperimentConfig().objective == "xy"

    def test_epsilon_range_enforced(self):
        with pytest.raises(ConfigError, match="outside supported range"):
            validate(ExperimentConfig(epsilon=5e-5))

    def test_claims_threshold_message(self):
        with pytest.raises(ConfigError,
                           match=r"epsilon exceeds gamma\^2/\(8a\^2\+8\)=0.015625"):
            validate(ExperimentConfig(preset="claims", epsilon=0.02))


class TestConfigRoundTrip:
    def test_canonical_text_round_trips(self):
        config = ExperimentConfig(preset="epsilon-sweep", epsilon=0.003,
                                  horizon=123.5, epsilons=(0.03, 0.01))
        text = config.canonical_text()
        parsed = ExperimentConfig(**_coerce(parse_config_text(text)))
        assert parsed == config
        assert parsed.canonical_text() == text

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("bogus = 1\n")

    def test_comments_and_blanks_ignored(self):
        values = parse_config_text("# comment\n\ngamma = 0.25  # inline\n")
        assert values == {"gamma": "0.25"}


def _coerce(values):
    from heavyball_lab.cli import _coerce as coerce
    return coerce(values)


class TestRunPresets:
    def test_figure1_outputs_and_classifications(self, tmp_path):
        out = tmp_path / "fig1"
        assert run_cli(["run", "--preset", "figure1", "--out", str(out)]) == 0
        assert (out / "heavy_ball.csv").exists()
        assert (out / "gradient_flow.csv").exists()
        diag = json.loads((out / "diagnostics.json").read_text())
        split = diag["checks"]["limit_splitting"]
        assert split["passed"]
        assert split["heavy_ball_limit"]["kind"] == "hyperbola"
        assert split["gradient_flow_limit"]["kind"] == "origin"

    def test_claims_preset_passes(self, tmp_path):
        out = tmp_path / "claims"
        assert run_cli(["run", "--preset", "claims", "--out", str(out)]) == 0
        payload = json.loads((out / "claims.json").read_text())
        assert all(c["passed"] for c in payload["checks"].values())
        assert payload["window"]["t_cross"] == pytest.approx(1.62, abs=0.05)

    def test_claims_inadmissible_epsilon_exits_2(self, tmp_path):
        out = tmp_path / "bad"
        code = run_cli(["run", "--preset", "claims", "--epsilon", "0.02",
                        "--out", str(out)])
        assert code == 2
        err = json.loads((out / "error.json").read_text())
        assert err["exit_code"] == 2
        assert "0.015625" in err["message"]

    def test_diagnostics_reports_known_failing_gradient_bound(self, tmp_path):
        # the doubled-space gradient bound check cannot pass with its
        # stated constant; the preset records exactly that one failure
        out = tmp_path / "diag"
        code = run_cli(["run", "--preset", "diagnostics", "--out", str(out)])
        assert code == 1
        err = json.loads((out / "error.json").read_text())
        assert err["failed_checks"] == ["grad_h_bound"]
        diag = json.loads((out / "diagnostics.json").read_text())
        passing = {k for k, v in diag["checks"].items() if v["passed"]}
        assert {"dissipation_identity", "energy_monotone",
                "l2_velocity_bound", "speed_bound",
                "h_alpha_dissipation"} <= passing

    def test_custom_preset_writes_run_record(self, tmp_path):
        out = tmp_path / "custom"
        assert run_cli(["run", "--preset", "custom", "--epsilon", "0.05",
                        "--horizon", "50", "--out", str(out)]) == 0
        rec = json.loads((out / "run.json").read_text())
        assert rec["stop_reason"] in ("converged", "t_end")
        assert rec["length"] > 0

    def test_sweep_short_ladder(self, tmp_path):
        out = tmp_path / "sweep"
        code = run_cli(["run", "--preset", "epsilon-sweep",
                        "--epsilons", "0.03,0.01", "--horizon", "120",
                        "--out", str(out)])
        assert code == 1  # per-mass reports carry the known-red bound check
        payload = json.loads((out / "sweep.json").read_text())
        assert (out / "heavy_ball_eps0.03.csv").exists()
        assert (out / "heavy_ball_eps0.01.csv").exists()
        assert payload["sigma"]["sigma"] > 0
        err = json.loads((out / "error.json").read_text())
        assert all("grad_h_bound" in name for name in err["failed_checks"])


class TestDeterminism:
    def test_identical_config_bitwise_identical_outputs(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run_cli(["run", "--preset", "figure1", "--out",
                            str(out)]) == 0
            outs.append(out)
        for fname in ("heavy_ball.csv", "gradient_flow.csv",
                      "diagnostics.json", "config.txt"):
            assert (outs[0] / fname).read_bytes() == \
                (outs[1] / fname).read_bytes(), fname


class TestCsvSchema:
    def test_header_and_schema_line(self, tmp_path):
        out = tmp_path / "fig"
        run_cli(["run", "--preset", "figure1", "--out", str(out)])
        lines = (out / "heavy_ball.csv").read_text().splitlines()
        assert lines[0] == "# trajectory-csv/1"
        assert lines[1] == "t,x1,x2,v1,v2,F,grad_norm"
        assert len(lines) == 2 + 2000

    def test_initial_row_values(self, tmp_path):
        out = tmp_path / "fig"
        run_cli(["run", "--preset", "figure1", "--out", str(out)])
        first = (out / "heavy_ball.csv").read_text().splitlines()[2]
        vals = [float(v) for v in first.split(",")]
        assert vals[:5] == [0.0, 1.0, -1.0, 0.1, 0.1]
        assert vals[5] == pytest.approx(4.0001)


class TestOutDirResolution:
    def test_env_var_override(self, tmp_path, monkeypatch):
        target = tmp_path / "env_out"
        monkeypatch.setenv("HEAVYBALL_LAB_OUT", str(target))
        assert run_cli(["run", "--preset", "custom", "--horizon", "20"]) == 0
        assert (target / "run.json").exists()

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HEAVYBALL_LAB_OUT", str(tmp_path / "ignored"))
        out = tmp_path / "flagged"
        assert run_cli(["run", "--preset", "custom", "--horizon", "20",
                        "--out", str(out)]) == 0
        assert (out / "run.json").exists()
        assert not (tmp_path / "ignored").exists()

    def test_config_file_plus_flag_override(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("preset = custom\nhorizon = 20.0\nepsilon = 0.05\n")
        out = tmp_path / "cfgout"
        assert run_cli(["run", "--config", str(cfg), "--epsilon", "0.03",
                        "--out", str(out)]) == 0
        text = (out / "config.txt").read_text()
        assert "epsilon = 0.03" in text
        assert "horizon = 20.0" in text
