import json
from pathlib import Path

import numpy as np
import pytest

from iontrap import config as cfgmod
from iontrap.config import ConfigError, angular, defaults, load, parse_text, seconds, to_jsonable

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_defaults_per_command():
    assert defaults("modes") == {"crystal": {"ions": 5, "axial_frequency_khz": 1712.0, "eta": 0.068}}
    ghz = defaults("ghz")
    assert ghz["gate"]["rabi_khz"] == 230.0 and ghz["gate"]["compensate"] is False
    assert defaults("stark-scan")["space"]["n_max"] == 4
    assert "noise" not in defaults("stark-scan")
    with pytest.raises(ConfigError):
        defaults("nope")


def test_defaults_are_independent_copies():
    a = defaults("truth-table")
    a["noise"]["prep_fidelity"][0] = 0.1
    assert defaults("truth-table")["noise"]["prep_fidelity"][0] == 0.98


def test_parse_values_and_comments():
    text = """
    # comment
    [run]
    seed = 7   ; trailing comment
    threads = 2
    [gate]
    compensate = no
    rabi_khz = auto
    [noise]
    prep_fidelity = 0:0.9, 1:0.8
    [readout]
    mode = flop
    """
    cfg = parse_text(text, "truth-table")
    assert cfg["run"]["seed"] == 7 and cfg["run"]["threads"] == 2
    assert cfg["gate"]["compensate"] is False
    assert cfg["gate"]["rabi_khz"] is None
    assert cfg["noise"]["prep_fidelity"] == {0: 0.9, 1: 0.8}
    assert cfg["readout"]["mode"] == "flop"
    assert cfg["run"]["shots"] == 100


@pytest.mark.parametrize("text, line, fragment", [
    ("[run]\nseed = 1\nshotz = 3\n", 3, "unknown key 'shotz'"),
    ("[run]\nseed = 1\nseed = 2\n", 3, "duplicate key 'seed'"),
    ("[bogus]\n", 1, "unknown section"),
    ("[ghz]\n", 1, "not used by 'truth-table'"),
    ("seed = 1\n", 1, "outside any section"),
    ("[run]\nseed\n", 2, "expected 'key = value'"),
    ("[run]\n\nseed = x\n", 3, "bad value for 'seed'"),
    ("[readout]\nmode = slow\n", 2, "expected one of fast, flop"),
    ("[gate]\ncompensate = maybe\n", 2, "boolean"),
    ("[run\n", 1, "malformed section"),
])
def test_errors_name_the_line(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_text(text, "truth-table", source="x.ini")
    assert f"x.ini:{line}:" in str(info.value)
    assert fragment in str(info.value)


@pytest.mark.parametrize("text", [
    "[run]\nshots = 0\n",
    "[noise]\ncontrast_loss = 1.0\n",
    "[noise]\nprep_fidelity = 0:1.2\n",
])
def test_validation(text):
    with pytest.raises(ConfigError):
        parse_text(text, "truth-table")


def test_unit_boundary():
    assert angular(2.71, "stark_slope_khz") == pytest.approx(2 * np.pi * 2710)
    assert angular(300.0, "residual_hz") == pytest.approx(2 * np.pi * 300)
    assert angular(None, "rabi_khz") is None
    assert seconds(260.0, "duration_us") == pytest.approx(260e-6)
    with pytest.raises(ValueError):
        angular(1.0, "duration_us")
    with pytest.raises(ValueError):
        seconds(1.0, "rabi_khz")


def test_json_round_trip(tmp_path):
    cfg = parse_text("[noise]\nprep_fidelity = 0:0.97, 2:0.9\n[run]\nseed = 4\n", "truth-table")
    path = tmp_path / "summary.json"
    path.write_text(json.dumps({"command": "truth-table", "config": to_jsonable(cfg)}))
    assert load(path, "truth-table") == cfg


def test_json_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  oops\n}")
    with pytest.raises(ConfigError, match="bad.json:2"):
        load(bad, "echo")
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"config": {"run": {"colour": 1}}}))
    with pytest.raises(ConfigError, match="unknown key 'colour'"):
        load(wrong, "echo")


def test_missing_file():
    with pytest.raises(ConfigError):
        load("/nonexistent/file.ini", "echo")
    assert load(None, "echo") == defaults("echo")


@pytest.mark.parametrize("name, command", [
    ("stark_scan", "stark-scan"), ("truth_table", "truth-table"), ("truth_table_flop", "truth-table"),
    ("rabi_flop", "rabi-flop"), ("ghz", "ghz"), ("echo", "echo"), ("noiseless", "truth-table"),
])
def test_shipped_configs_load(name, command):
    cfg = load(CONFIGS / f"{name}.ini", command)
    assert set(cfg) == set(cfgmod.COMMAND_SECTIONS[command])
