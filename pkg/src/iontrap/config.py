"""Experiment configuration files.

Format: ``[section]`` headers followed by ``key = value`` lines; ``#`` and
``;`` start comments.  Every physical quantity carries its unit in the key
name and is given in cyclic units:

========  ==========================  =====================
suffix    unit in the file            internal unit
========  ==========================  =====================
``_khz``  kilohertz (cyclic)          rad/s (x 2 pi x 1e3)
``_hz``   hertz (cyclic)              rad/s (x 2 pi)
``_us``   microseconds                seconds (x 1e-6)
``_rad``  radians                     radians
========  ==========================  =====================

Conversion to angular units happens only in :func:`angular` and
:func:`seconds`; experiment drivers never see kHz.  Keys that are not in the
schema of the chosen command are rejected with the offending line number.
A JSON run summary is accepted in place of a config file; its ``config``
entry is used.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration; the message names the file, line and key."""


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def _fidelity_map(text: str) -> dict[int, float]:
    out = {}
    for item in text.replace(" ", "").split(","):
        if not item:
            continue
        n, f = item.split(":")
        out[int(n)] = float(f)
    return out


def _choice(*options):
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t
    return parse


def _optional(parse):
    def wrapped(text: str):
        t = text.strip().lower()
        return None if t in ("", "auto", "none") else parse(text)
    return wrapped


SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "seed": (int, 1),
        "shots": (int, 100),
        "threads": (int, 1),
        "repetitions": (int, 10),
    },
    "crystal": {
        "ions": (int, 1),
        "axial_frequency_khz": (float, 1712.0),
        "eta": (float, 0.068),
    },
    "space": {
        "n_max": (int, 3),
        "spectator_modes": (int, 2),
        "spectator_n_max": (int, 2),
    },
    "gate": {
        "rabi_khz": (_optional(float), None),
        "stark_slope_khz": (float, 2.71),
        "calibration": (_choice("exact", "second_order"), "exact"),
        "detuning_khz": (float, 60.0),
        "carrier_rabi_khz": (float, 100.0),
        "compensate": (_bool, True),
        "delta_other_hz": (float, 0.0),
        "residual_hz": (float, 300.0),
        "phi_time_us": (_optional(float), None),
        "gate_time_factor": (float, 1.08),
    },
    "noise": {
        "enabled": (_bool, True),
        "contrast_loss": (float, 0.06),
        "contrast_delay_us": (_optional(float), None),
        "detuning_sigma_hz": (_optional(float), None),
        "prep_fidelity": (_fidelity_map, {0: 0.98, 1: 0.96, 2: 0.94, 3: 0.92}),
        "prep_error_mode": (_choice("split", "pulses"), "pulses"),
        "prep_motional_weight": (float, 0.5),
        "cooling_error": (float, 0.02),
        "sideband_pi_error": (float, 0.02),
        "carrier_pi_error": (float, 0.01),
    },
    "readout": {
        "mode": (_choice("fast", "flop"), "fast"),
        "flop_omega01_khz": (float, 11.9),
        "tau_max_us": (float, 300.0),
        "points": (int, 41),
    },
    "stark": {
        "n_values": (_int_list, [0, 1, 2, 3]),
        "duration_us": (float, 260.0),
        "time_points": (int, 27),
        "phase_points": (int, 16),
    },
    "ghz": {
        "t_start_us": (float, 0.0),
        "t_stop_us": (float, 1600.0),
        "t_step_us": (float, 10.0),
        "guard": (float, 0.25),
        "scaling_report": (_bool, True),
    },
    "echo": {
        "total_time_us": (float, 2000.0),
        "phase_points": (int, 16),
    },
}

COMMAND_SECTIONS = {
    "modes": ("crystal",),
    "stark-scan": ("run", "crystal", "space", "gate", "stark"),
    "truth-table": ("run", "crystal", "space", "gate", "noise", "readout"),
    "rabi-flop": ("run", "crystal", "space", "gate", "noise", "readout"),
    "ghz": ("run", "crystal", "space", "gate", "ghz"),
    "echo": ("run", "noise", "gate", "echo"),
}

# Per-command departures from the schema defaults.
COMMAND_DEFAULTS = {
    "modes": {"crystal": {"ions": 5}},
    "stark-scan": {"space": {"n_max": 4}, "gate": {"residual_hz": 0.0}},
    "truth-table": {},
    "rabi-flop": {},
    "ghz": {"crystal": {"ions": 5}, "space": {"n_max": 2},
            "gate": {"rabi_khz": 230.0, "compensate": False, "residual_hz": 0.0}},
    "echo": {"noise": {"contrast_delay_us": 200.0}},
}


def defaults(command: str) -> dict:
    if command not in COMMAND_SECTIONS:
        raise ConfigError(f"unknown command {command!r}")
    out = {sec: {k: copy.deepcopy(v[1]) for k, v in SCHEMA[sec].items()} for sec in COMMAND_SECTIONS[command]}
    for sec, values in COMMAND_DEFAULTS[command].items():
        out[sec].update(values)
    return out


def parse_text(text: str, command: str, source: str = "<config>") -> dict:
    """Parse config text on top of the command defaults."""
    cfg = defaults(command)
    section = None
    seen: dict[tuple, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"{where}: unknown section [{section}]")
            if section not in cfg:
                raise ConfigError(f"{where}: section [{section}] is not used by '{command}'")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside any section")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"{where}: unknown key '{key}' in [{section}]")
        if (section, key) in seen:
            raise ConfigError(f"{where}: duplicate key '{key}' (first set on line {seen[section, key]})")
        seen[section, key] = lineno
        try:
            cfg[section][key] = SCHEMA[section][key][0](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}: bad value for '{key}': {exc}") from None
    validate(cfg, source)
    return cfg


def from_resolved(data: dict, command: str, source: str = "<json>") -> dict:
    """Config from an already resolved mapping, e.g. a run summary's ``config``."""
    cfg = defaults(command)
    for section, values in data.items():
        if section not in cfg:
            raise ConfigError(f"{source}: section [{section}] is not used by '{command}'")
        for key, value in values.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")
            if key == "prep_fidelity" and value is not None:
                value = {int(n): float(f) for n, f in value.items()}
            cfg[section][key] = value
    validate(cfg, source)
    return cfg


def load(path: str | Path | None, command: str) -> dict:
    if path is None:
        return defaults(command)
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
        return from_resolved(data.get("config", data), command, str(path))
    return parse_text(text, command, str(path))


def validate(cfg: dict, source: str = "<config>"):
    def need(ok, msg):
        if not ok:
            raise ConfigError(f"{source}: {msg}")

    run = cfg.get("run")
    if run:
        need(run["shots"] >= 1, "shots must be >= 1")
        need(run["threads"] >= 1, "threads must be >= 1")
        need(run["repetitions"] >= 1, "repetitions must be >= 1")
    if "crystal" in cfg:
        need(cfg["crystal"]["ions"] >= 1, "ions must be >= 1")
        need(cfg["crystal"]["axial_frequency_khz"] > 0, "axial_frequency_khz must be > 0")
    if "noise" in cfg:
        n = cfg["noise"]
        need(0 <= n["contrast_loss"] < 1, "contrast_loss must lie in [0, 1)")
        need(all(0 <= f <= 1 for f in n["prep_fidelity"].values()), "prep fidelities must lie in [0, 1]")
    if "ghz" in cfg:
        g = cfg["ghz"]
        need(g["t_step_us"] > 0 and g["t_stop_us"] >= g["t_start_us"], "invalid phi_time scan range")


def to_jsonable(cfg: dict) -> dict:
    out = copy.deepcopy(cfg)
    for values in out.values():
        if "prep_fidelity" in values and values["prep_fidelity"] is not None:
            values["prep_fidelity"] = {str(k): v for k, v in sorted(values["prep_fidelity"].items())}
    return out


# --- unit boundary --------------------------------------------------------------

def angular(value: float | None, key: str) -> float | None:
    """Cyclic frequency from the file (unit in ``key``) to rad/s."""
    if value is None:
        return None
    if key.endswith("_khz"):
        return 2 * np.pi * 1e3 * value
    if key.endswith("_hz"):
        return 2 * np.pi * value
    raise ValueError(f"{key} is not a frequency key")


def seconds(value: float | None, key: str) -> float | None:
    if value is None:
        return None
    if key.endswith("_us"):
        return 1e-6 * value
    raise ValueError(f"{key} is not a time key")
