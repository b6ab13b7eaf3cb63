"""Command-line entry point: ``iontrap <command> [--config FILE] ...``.

Each experiment command writes ``<command>.csv`` (deterministic body) and
``<command>.json`` (run summary) into ``--out``.  The summary holds the
resolved configuration, the seed, a UTC timestamp, and the results; it can be
passed back through ``--config`` to repeat the run.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, config as cfgmod
from .config import ConfigError, angular, seconds
from .evolve import NoiseModel
from .experiments import (FlopReadout, GateSetup, GhzSetup, gate_channel, ghz_scaling, ghz_scan,
                          rabi_flops, spin_echo, stark_scan, truth_table)
from .modes import IonCrystal, normal_modes

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2


# --- config to driver objects ----------------------------------------------------

def gate_setup(cfg: dict) -> GateSetup:
    g, c = cfg["gate"], cfg.get("crystal", {})
    space = cfg.get("space", {"n_max": 3})
    return GateSetup(
        eta=c.get("eta", 0.068),
        detuning=angular(g["detuning_khz"], "detuning_khz"),
        stark_slope=angular(g["stark_slope_khz"], "stark_slope_khz"),
        rabi_0=angular(g["rabi_khz"], "rabi_khz"),
        calibration=g["calibration"],
        n_max=space["n_max"],
        compensate=g["compensate"],
        delta_other=angular(g["delta_other_hz"], "delta_other_hz"),
        residual=angular(g["residual_hz"], "residual_hz"),
        carrier_rabi=angular(g["carrier_rabi_khz"], "carrier_rabi_khz"),
        axial_frequency=angular(c.get("axial_frequency_khz", 1712.0), "axial_frequency_khz"),
    )


def phi_time(cfg: dict, setup: GateSetup) -> float:
    g = cfg["gate"]
    explicit = seconds(g["phi_time_us"], "phi_time_us")
    return explicit if explicit is not None else g["gate_time_factor"] * setup.t0


def noise_model(cfg: dict, default_delay: float | None) -> NoiseModel | None:
    n = cfg["noise"]
    if not n["enabled"]:
        return None
    kw = dict(prep_fidelity=dict(n["prep_fidelity"]), prep_error_mode=n["prep_error_mode"],
              prep_motional_weight=n["prep_motional_weight"], cooling_error=n["cooling_error"],
              sideband_pi_error=n["sideband_pi_error"], carrier_pi_error=n["carrier_pi_error"],
              ramsey_contrast_loss=n["contrast_loss"])
    sigma = angular(n["detuning_sigma_hz"], "detuning_sigma_hz")
    if sigma is not None:
        return NoiseModel(detuning_sigma=sigma, **kw)
    delay = seconds(n["contrast_delay_us"], "contrast_delay_us") or default_delay
    if delay is None:
        raise ConfigError("noise: contrast_delay_us is required for this command")
    kw.pop("ramsey_contrast_loss")
    return NoiseModel.calibrated(n["contrast_loss"], delay, **kw)


def flop_readout(cfg: dict) -> FlopReadout:
    r = cfg["readout"]
    return FlopReadout(angular(r["flop_omega01_khz"], "flop_omega01_khz"),
                       seconds(r["tau_max_us"], "tau_max_us"), r["points"])


# --- commands -----------------------------------------------------------------

def run_modes(cfg: dict, ions: int | None) -> tuple[str, dict]:
    c = cfg["crystal"]
    n = ions if ions is not None else c["ions"]
    axial = angular(c["axial_frequency_khz"], "axial_frequency_khz")
    crystal = IonCrystal(n, axial, c["eta"])
    ms = normal_modes(crystal)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "position", "mode_frequency", "mode_frequency_hz"] + [f"eta_ion{j}" for j in range(n)])
    for k in range(n):
        w.writerow([k, f"{ms.positions[k]:.9g}", f"{ms.frequencies[k]:.9g}",
                    f"{ms.frequencies[k] * axial / (2 * np.pi):.9g}"] + [f"{ms.eta[j, k]:.9g}" for j in range(n)])
    return buf.getvalue(), {"ion_count": n, "rows": "index k: ion k position, mode k frequency, eta[ion, mode k]"}


def run_stark(cfg: dict) -> tuple[str, dict]:
    setup = gate_setup(cfg)
    s = cfg["stark"]
    scan = stark_scan(setup, tuple(s["n_values"]), seconds(s["duration_us"], "duration_us"), s["time_points"],
                      s["phase_points"], shots=cfg["run"]["shots"], seed=cfg["run"]["seed"])
    return scan.to_csv(), scan.summary()


def run_truth_table(cfg: dict, threads: int) -> tuple[str, dict]:
    setup = gate_setup(cfg)
    t = phi_time(cfg, setup)
    ctx, seq = gate_channel(setup, t)
    run = cfg["run"]
    mode = cfg["readout"]["mode"]
    # flop mode fits one trace per input; the repetitions pool into its shots
    table = truth_table(ctx, seq, noise_model(cfg, t), run["shots"], run["repetitions"], run["seed"], threads,
                        mode, flop_readout(cfg), setup.eta)
    summary = table.summary()
    summary.update(setup.describe(), phi_time_us=t * 1e6)
    return table.to_csv(), summary


def run_rabi_flop(cfg: dict, threads: int) -> tuple[str, dict]:
    setup = gate_setup(cfg)
    t = phi_time(cfg, setup)
    ctx, seq = gate_channel(setup, t)
    flops = rabi_flops(ctx, seq, noise_model(cfg, t), flop_readout(cfg), cfg["run"]["shots"],
                       cfg["run"]["seed"], threads, setup.eta)
    summary = flops.summary()
    summary.update(setup.describe(), phi_time_us=t * 1e6)
    return flops.to_csv(), summary


def run_ghz(cfg: dict) -> tuple[str, dict]:
    c, g, sp, gh = cfg["crystal"], cfg["gate"], cfg["space"], cfg["ghz"]
    rabi = angular(g["rabi_khz"], "rabi_khz")
    if rabi is None:
        raise ConfigError("gate: rabi_khz is required for ghz")
    if c["ions"] < 2:
        raise ConfigError("crystal: ghz needs ions >= 2")
    setup = GhzSetup(c["ions"], rabi, angular(g["detuning_khz"], "detuning_khz"), c["eta"],
                     angular(c["axial_frequency_khz"], "axial_frequency_khz"), sp["n_max"],
                     sp["spectator_modes"], sp["spectator_n_max"],
                     angular(g["carrier_rabi_khz"], "carrier_rabi_khz"))
    times_us = np.arange(gh["t_start_us"], gh["t_stop_us"] + 0.5 * gh["t_step_us"], gh["t_step_us"])
    if gh["t_start_us"] <= 900.0 <= gh["t_stop_us"]:
        times_us = np.union1d(np.round(times_us, 9), [900.0])
    scan = ghz_scan(setup, times_us * 1e-6)
    scan.guard = gh["guard"]
    summary = scan.summary()
    if gh["scaling_report"]:
        summary["scaling"] = ghz_scaling(setup)
    return scan.to_csv(), summary


def run_echo(cfg: dict, threads: int) -> tuple[str, dict]:
    noise = noise_model(cfg, None)
    if noise is None:
        raise ConfigError("noise: echo needs enabled = true")
    e, run = cfg["echo"], cfg["run"]
    res = spin_echo(noise, seconds(e["total_time_us"], "total_time_us"), run["shots"], e["phase_points"],
                    run["seed"], threads, angular(cfg["gate"]["carrier_rabi_khz"], "carrier_rabi_khz"))
    return res.to_csv(), res.summary()


# --- fit ---------------------------------------------------------------------

CURVE_POINTS = 400

FIT_COLUMNS = {
    "flop": (("tau_us", 1e-6), ("P_D", 1.0), ("stderr", 1.0)),
    "stark": (("n", 1.0), ("shift_hz", 2 * np.pi), ("shift_stderr_hz", 2 * np.pi)),
    "ramsey": (("phase_rad", 1.0), ("P_D", 1.0), ("stderr", 1.0)),
}


def read_fit_csv(path: str | Path, model: str, trace: str | None = None) -> np.ndarray:
    """Numeric columns for ``model`` from a CSV with a header row.

    Columns are matched by header name; files without the named columns are
    read positionally.  Errors name the offending line.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    rows = list(csv.reader(io.StringIO(text)))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and not r[0].startswith("#")]
    if not rows:
        raise ConfigError(f"{path}: empty file")
    header = [h.strip() for h in rows[0][1]]
    wanted = FIT_COLUMNS[model]
    if all(name in header for name, _ in wanted[:2]):
        idx = [header.index(name) if name in header else None for name, _ in wanted]
    else:
        idx = [0, 1, 2]
    label_col = next((c for c in ("input", "sequence") if c in header), None)
    sel = header.index(label_col) if (trace is not None and label_col) else None
    if trace is not None and sel is None:
        raise ConfigError(f"{path}:{rows[0][0]}: --trace needs an 'input' or 'sequence' column")
    out = []
    for lineno, r in rows[1:]:
        if sel is not None and r[sel].strip() != trace:
            continue
        vals = []
        for (name, factor), j in zip(wanted, idx):
            if j is None or j >= len(r):
                if name in ("stderr", "shift_stderr_hz") or j is None:
                    vals.append(np.nan)
                    continue
                raise ConfigError(f"{path}:{lineno}: missing column '{name}'")
            try:
                vals.append(float(r[j]) * factor)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-numeric value {r[j]!r} in column '{name}'") from None
        out.append(vals)
    if not out:
        raise ConfigError(f"{path}: no data rows" + (f" for trace {trace!r}" if trace else ""))
    arr = np.array(out)
    if np.all(np.isnan(arr[:, 2])):
        arr[:, 2] = 1.0
    elif np.any(np.isnan(arr[:, 2])):
        raise ConfigError(f"{path}: stderr column is only partly filled")
    return arr


def run_fit(path: str, model: str, trace: str | None, shots: int | None = None, dominant: str = "auto",
            lock_sqrt2: bool = False) -> tuple[dict, bool, str]:
    """Fit report, convergence flag, and a CSV of fitted-curve samples."""
    data = read_fit_csv(path, model, trace)
    x = np.linspace(data[:, 0].min(), data[:, 0].max(), CURVE_POINTS)
    if model == "flop":
        result = analysis.fit_flop(data, lock_sqrt2=lock_sqrt2, dominant=dominant, shots=shots)
        curve = _csv_text(["tau_us", "P_D_fit"], zip(x * 1e6, result.model(x)))
        return result.to_dict(), bool(result.converged), curve
    if model == "stark":
        result = analysis.fit_stark_slope(data)
        y = (result.slope * x + result.intercept) / (2 * np.pi)
        return result.to_dict(), True, _csv_text(["n", "shift_hz_fit"], zip(x, y))
    result = analysis.ramsey_contrast(data)
    y = result.baseline + 0.5 * result.raw_contrast * np.cos(x + result.phase_offset)
    return result.to_dict(), bool(result.converged), _csv_text(["phase_rad", "P_D_fit"], zip(x, y))


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(f"{v:.9g}" for v in row) for row in rows]
    return "\n".join(lines) + "\n"


# --- plumbing --------------------------------------------------------------------

def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def summary_document(command: str, cfg: dict, results: dict) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed": cfg.get("run", {}).get("seed"),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "units": {"config": "cyclic frequencies (kHz/Hz), times in us", "results": "as named in each key"},
        "config": cfgmod.to_jsonable(cfg),
        "results": results,
    }


def _write(out: Path, stem: str, csv_body: str | None, doc: dict):
    out.mkdir(parents=True, exist_ok=True)
    if csv_body is not None:
        (out / f"{stem}.csv").write_text(csv_body)
    (out / f"{stem}.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iontrap", description="Dispersive trapped-ion gate simulator.")
    p.add_argument("--version", action="version", version=f"iontrap {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="config file (INI-style) or a JSON run summary")
        sp.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
        sp.add_argument("--shots", type=int, help="shots per point (overrides [run] shots)")
        sp.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
        sp.add_argument("--out", default=".", help="output directory (default: current)")

    sp = sub.add_parser("modes", help="equilibrium positions, mode frequencies and eta matrix")
    common(sp)
    sp.add_argument("--ions", type=int, help="number of ions (overrides [crystal] ions)")
    for name, text in (("stark-scan", "Ramsey phase rate against phonon number"),
                       ("truth-table", "truth table of the conditional-phase gate"),
                       ("rabi-flop", "blue-sideband flops after the gate, fitted"),
                       ("ghz", "N-ion entangling sequence, phi_time scan"),
                       ("echo", "Ramsey contrast with and without spin echo")):
        common(sub.add_parser(name, help=text))
    sp = sub.add_parser("fit", help="fit a CSV file and print a JSON report")
    sp.add_argument("input", help="CSV file with a header row")
    sp.add_argument("--model", choices=("flop", "stark", "ramsey"), required=True)
    sp.add_argument("--trace", help="select rows whose 'input' (or 'sequence') column equals this label")
    sp.add_argument("--shots", type=int, help="shots per point; weights become binomial errors of the model")
    sp.add_argument("--dominant", choices=("auto", "01", "12"), default="auto",
                    help="flop model: ladder step behind the strongest spectral peak")
    sp.add_argument("--lock-sqrt2", action="store_true", help="flop model: tie Omega12 to sqrt(2) Omega01")
    sp.add_argument("--out", help="also write fit.json and fit_curve.csv to this directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fit":
            if args.shots is not None and args.shots < 1:
                raise ConfigError("command line: --shots must be >= 1")
            report, converged, curve = run_fit(args.input, args.model, args.trace, args.shots,
                                               args.dominant, args.lock_sqrt2)
            text = json.dumps(report, indent=2, sort_keys=True, default=_json_default)
            print(text)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "fit.json").write_text(text + "\n")
                (Path(args.out) / "fit_curve.csv").write_text(curve)
            return EXIT_OK if converged else EXIT_NOT_CONVERGED

        cfg = cfgmod.load(args.config, args.command)
        run = cfg.get("run")
        if run is not None:
            for key in ("seed", "shots", "threads"):
                if getattr(args, key) is not None:
                    run[key] = getattr(args, key)
            cfgmod.validate(cfg, "command line")
        threads = run["threads"] if run else 1
        out = Path(args.out)

        if args.command == "modes":
            body, results = run_modes(cfg, args.ions)
            if args.ions is not None:
                cfg["crystal"]["ions"] = args.ions
            sys.stdout.write(body)
        elif args.command == "stark-scan":
            body, results = run_stark(cfg)
        elif args.command == "truth-table":
            body, results = run_truth_table(cfg, threads)
        elif args.command == "rabi-flop":
            body, results = run_rabi_flop(cfg, threads)
        elif args.command == "ghz":
            body, results = run_ghz(cfg)
        else:
            body, results = run_echo(cfg, threads)
        stem = args.command.replace("-", "_")
        _write(out, stem, body, summary_document(args.command, cfg, results))
        if args.command != "modes":
            print(f"wrote {out / (stem + '.csv')} and {out / (stem + '.json')}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"iontrap: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
