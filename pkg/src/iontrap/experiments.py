"""Experiment drivers behind the command-line tools.

Every driver takes angular frequencies (rad/s) and seconds; unit conversion
from configuration files happens in :mod:`iontrap.config`.  Results carry a
deterministic ``to_csv`` body and a JSON-ready ``summary``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import analysis
from .evolve import (DEFAULT_CARRIER_RABI, Delay, EchoPi, NoiseModel, PrepRecipe, Pulse,
                     RunContext, SequenceSpec, carrier_pulse, map_shots, run_in_context, shot_rng)
from .gates import (COMPUTATIONAL_LABELS, COMPUTATIONAL_STATES, R1_PHASE, R2_PHASE, entangle_time,
                    gate_sequence, gate_time_from_rate, ghz_fidelity, r2_phase_offset, rabi_for_slope)
from .hamiltonian import (BlueSideband, PulseEvent, ShiftBudget, compensation_solve,
                          dressed_ramsey_rate, ramsey_phase_rate, single_ion_modes)
from .hilbert import SpaceSpec, StateVector, measure, prepare
from .modes import IonCrystal, normal_modes, spectator_modes

TWO_PI = 2 * np.pi


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([f"{v:.9g}" if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _binomial(p: float, shots: int, rng: np.random.Generator) -> tuple[float, float]:
    """Shot-noise sample of a probability and its standard error."""
    p = float(min(max(p, 0.0), 1.0))
    k = rng.binomial(shots, p)
    ph = (k + 1) / (shots + 2)  # keeps the error bar finite at 0 and 1
    return k / shots, float(np.sqrt(ph * (1 - ph) / shots))


# --- single-ion gate setup ------------------------------------------------------

@dataclass(frozen=True)
class GateSetup:
    """One ion, one mode, dispersive blue-sideband pulse.

    ``rabi_0`` is the dispersive-beam carrier Rabi frequency.  When it is
    None it is calibrated so the Ramsey slope equals ``stark_slope``, using
    the exact dressed rates (``calibration="exact"``) or the second-order
    shift formula (``"second_order"``).
    """

    eta: float = 0.068
    detuning: float = TWO_PI * 60e3
    stark_slope: float = TWO_PI * 2.71e3
    rabi_0: float | None = None
    calibration: str = "exact"
    n_max: int = 3
    compensate: bool = True
    delta_other: float = 0.0
    residual: float = 0.0
    carrier_rabi: float = DEFAULT_CARRIER_RABI
    axial_frequency: float = TWO_PI * 1.712e6

    def __post_init__(self):
        if self.calibration not in ("exact", "second_order"):
            raise ValueError(f"unknown calibration {self.calibration!r}")

    @property
    def rabi(self) -> float:
        if self.rabi_0 is not None:
            return self.rabi_0
        return rabi_for_slope(self.stark_slope, self.eta, self.detuning,
                              exact=self.calibration == "exact",
                              budget=lambda r: self._budget_for(r).total)

    def _budget_for(self, rabi: float) -> ShiftBudget:
        if not self.compensate:
            return ShiftBudget(self.delta_other, 0.0)
        return compensation_solve(self.eta, rabi, self.detuning, self.delta_other,
                                  n_max=1, residual=self.residual)

    @property
    def budget(self) -> ShiftBudget:
        return self._budget_for(self.rabi)

    @property
    def t0(self) -> float:
        """Exact gate condition: the n=1 Ramsey phase leads n=0 by pi."""
        rabi, b = self.rabi, self.budget.total
        rates = [dressed_ramsey_rate(n, self.eta, rabi, self.detuning, b) for n in (0, 1)]
        return gate_time_from_rate(rates[1] - rates[0], "ramsey")

    def space(self) -> SpaceSpec:
        return SpaceSpec(1, ((0, self.n_max),))

    def context(self) -> RunContext:
        return RunContext(self.space(), single_ion_modes(self.eta, self.axial_frequency),
                          self.budget, self.axial_frequency)

    def describe(self) -> dict:
        return {"rabi_0_khz": self.rabi / TWO_PI / 1e3, "t0_us": self.t0 * 1e6,
                "delta_comp_hz": self.budget.delta_comp / TWO_PI}


# --- Stark scan ------------------------------------------------------------------

@dataclass
class StarkScan:
    n_values: np.ndarray
    rates: np.ndarray  # rad/s, E_S - E_D while the beam is on
    rate_errors: np.ndarray
    fit: analysis.StarkFit
    curvature: float  # quadratic coefficient of a parabola through the rates, rad/s
    dressed: np.ndarray
    second_order: np.ndarray
    setup: GateSetup

    @property
    def curvature_ratio(self) -> float:
        return abs(self.curvature / self.fit.slope)

    def to_csv(self) -> str:
        rows = [(int(n), r / TWO_PI, e / TWO_PI, d / TWO_PI, s / TWO_PI)
                for n, r, e, d, s in zip(self.n_values, self.rates, self.rate_errors,
                                         self.dressed, self.second_order)]
        return _csv(["n", "shift_hz", "shift_stderr_hz", "dressed_model_hz", "second_order_hz"], rows)

    def summary(self) -> dict:
        return {"fit": self.fit.to_dict(), "curvature_hz": self.curvature / TWO_PI,
                "curvature_over_slope": self.curvature_ratio, **self.setup.describe()}


def ramsey_phase(ctx: RunContext, n: int, durations, rabi_0: float, detuning: float,
                 carrier_rabi: float = DEFAULT_CARRIER_RABI, phase_points: int = 16,
                 shots: int = 0, rng: np.random.Generator | None = None):
    """Unwrapped Ramsey phase of |n> after each dispersive-pulse duration.

    R1, the dispersive pulse, then R2 stepped over ``phase_points`` phases;
    each fringe is fitted for its phase offset.  With ``shots`` > 0 the
    fringe points carry binomial shot noise drawn from ``rng``.  Returns
    (phases, phase_errors); the phase grows as +rate * t for rate = E_S - E_D.
    """
    space = ctx.space
    thetas = np.linspace(0, TWO_PI, phase_points, endpoint=False)
    r2 = [ctx.element_unitary(carrier_pulse(np.pi / 2, R2_PHASE + th, carrier_rabi)) for th in thetas]
    start = ctx.apply(carrier_pulse(np.pi / 2, R1_PHASE, carrier_rabi), prepare(space, "S", [n]).amplitudes)
    d_mask = np.array([lab.startswith("D") for lab in space.labels()])
    phases, errors = [], []
    for t in durations:
        amps = ctx.apply(Pulse(PulseEvent(BlueSideband(0), rabi_0, detuning, 0.0, float(t))), start)
        rows = []
        for th, u in zip(thetas, r2):
            p = float(np.sum(np.abs(u @ amps)[d_mask] ** 2))
            if shots > 0:
                p, err = _binomial(p, shots, rng)
            else:
                err = 1.0
            rows.append((th, p, err))
        fit = analysis.ramsey_contrast(rows)
        phases.append(fit.phase_offset)
        errors.append(fit.contrast_err / max(fit.raw_contrast, 1e-3) if shots else 0.0)
    return np.unwrap(phases), np.asarray(errors)


def stark_scan(setup: GateSetup, n_values=(0, 1, 2, 3), duration: float = 260e-6, time_points: int = 27,
               phase_points: int = 16, shots: int = 0, seed: int = 0) -> StarkScan:
    """Ramsey phase rate against phonon number, fitted with a straight line."""
    ctx = setup.context()
    rabi = setup.rabi
    times = np.linspace(0.0, duration, time_points)
    rates, errs = [], []
    for n in n_values:
        rng = shot_rng(seed, int(n), stream=1) if shots else None
        phases, perr = ramsey_phase(ctx, int(n), times, rabi, setup.detuning, setup.carrier_rabi,
                                    phase_points, shots, rng)
        # phase offset of the fringe runs opposite to E_S - E_D with R2 = exp(+i theta)
        phases = -phases
        if shots:
            w = 1 / np.maximum(perr, 1e-6) ** 2
            coef, cov = np.polyfit(times, phases, 1, w=np.sqrt(w), cov="unscaled")
            rates.append(coef[0])
            errs.append(float(np.sqrt(cov[0, 0])))
        else:
            rates.append(np.polyfit(times, phases, 1)[0])
            errs.append(0.0)
    n_arr = np.asarray(n_values, dtype=float)
    rates = np.asarray(rates)
    errs = np.asarray(errs)
    fit = analysis.fit_stark_slope(np.column_stack([n_arr, rates, np.where(errs > 0, errs, 1.0)]))
    curvature = float(np.polyfit(n_arr, rates, 2)[0]) if len(n_arr) >= 3 else 0.0
    comp = setup.budget.total
    dressed = np.array([dressed_ramsey_rate(int(n), setup.eta, rabi, setup.detuning, comp) for n in n_values])
    second = np.array([ramsey_phase_rate(int(n), setup.eta, rabi, setup.detuning, setup.budget)
                       for n in n_values])
    return StarkScan(n_arr, rates, errs, fit, curvature, dressed, second, setup)


# --- truth table -----------------------------------------------------------------

def binned_readout(state: StateVector, rng: np.random.Generator) -> str:
    """Internal state plus phonon number of mode 0, with n >= 1 reported as 1."""
    rec = measure(state, rng, phonon_modes=[state.space.mode_list[0][0]])
    return f"{rec.internal},{min(rec.phonons[0], 1)}"


@dataclass(frozen=True)
class FlopReadout:
    """Blue-sideband flop readout of the motional state.

    ``omega_01`` is the fitted flop frequency of the |S,0>-|D,1> step in the
    sin^2(omega tau) convention, i.e. half the sideband Rabi frequency.
    """

    omega_01: float = TWO_PI * 11.9e3
    tau_max: float = 300e-6
    points: int = 41

    def taus(self) -> np.ndarray:
        return np.linspace(0.0, self.tau_max, self.points)

    def rabi_0(self, eta: float) -> float:
        return 2 * self.omega_01 / eta

    def event(self, eta: float, tau: float) -> PulseEvent:
        return PulseEvent(BlueSideband(0), self.rabi_0(eta), 0.0, 0.0, float(tau))


@dataclass
class TruthTable:
    probabilities: np.ndarray  # rows: input, columns: output (S0, D0, S1, D1)
    stderr: np.ndarray
    mode: str
    shots: int
    repetitions: int
    leakage: np.ndarray = field(default_factory=lambda: np.zeros(4))
    fits: list = field(default_factory=list)

    def to_csv(self) -> str:
        header = ["input"] + [f"P({lab})" for lab in COMPUTATIONAL_LABELS] + \
            [f"stderr({lab})" for lab in COMPUTATIONAL_LABELS]
        rows = [[lab, *self.probabilities[i], *self.stderr[i]] for i, lab in enumerate(COMPUTATIONAL_LABELS)]
        return _csv(header, rows)

    def summary(self) -> dict:
        out = {"mode": self.mode, "shots": self.shots, "repetitions": self.repetitions,
               "leakage_above_n1": {lab: float(v) for lab, v in zip(COMPUTATIONAL_LABELS, self.leakage)}}
        if self.fits:
            out["flop_fits"] = {lab: f.to_dict() for lab, f in zip(COMPUTATIONAL_LABELS, self.fits)}
        return out


def gate_channel(setup: GateSetup, phi_time: float) -> tuple[RunContext, SequenceSpec]:
    return setup.context(), gate_sequence(setup.rabi, setup.detuning, phi_time,
                                          carrier_rabi=setup.carrier_rabi)


def truth_table(ctx: RunContext, seq: SequenceSpec, noise: NoiseModel | None = None, shots: int = 100,
                repetitions: int = 1, seed: int = 0, threads: int = 1, mode: str = "fast",
                flop: FlopReadout | None = None, eta: float = 0.068) -> TruthTable:
    """Run ``seq`` on the four computational inputs and tabulate the outputs.

    ``"fast"`` reads the internal state and the phonon number projectively.
    ``"flop"`` follows each gate shot with a resonant blue-sideband pulse of
    varying length, records P_D(tau) and fits the flop model with the known
    frequencies; the fitted coefficients form the table row.
    """
    if mode not in ("fast", "flop"):
        raise ValueError(f"unknown truth-table mode {mode!r}")
    if shots < 1 or repetitions < 1:
        raise ValueError("shots and repetitions must be >= 1")
    space = ctx.space
    n_max = space.mode_list[0][1]
    probs = np.zeros((4, 4))
    errs = np.zeros((4, 4))
    leak = np.zeros(4)
    fits = []
    for i, (s, n) in enumerate(COMPUTATIONAL_STATES):
        recipe = PrepRecipe(s, (n,))
        clean = run_in_context(ctx, seq, recipe)
        leak[i] = float(clean.probabilities().reshape(2, n_max + 1)[:, 2:].sum())
        if mode == "fast":
            def one(k, i=i, recipe=recipe, clean=clean):
                rng = shot_rng(seed, k, stream=i)
                out = clean if noise is None else run_in_context(ctx, seq, recipe, noise, rng)
                return binned_readout(out, rng)

            labels = map_shots(one, shots * repetitions, threads)
            per_rep = np.array([[labels[r * shots:(r + 1) * shots].count(lab) / shots
                                 for lab in COMPUTATIONAL_LABELS] for r in range(repetitions)])
            probs[i] = per_rep.mean(axis=0)
            if repetitions > 1:
                errs[i] = per_rep.std(axis=0, ddof=1) / np.sqrt(repetitions)
            else:
                errs[i] = np.sqrt(probs[i] * (1 - probs[i]) / shots)
        else:
            flop = flop or FlopReadout()
            data = flop_trace(ctx, seq, recipe, noise, flop, shots * repetitions, seed, stream=i,
                              threads=threads, eta=eta)
            w = flop.omega_01
            fit = analysis.fit_flop(data, fixed_frequencies=(w, np.sqrt(2) * w), shots=shots * repetitions)
            fits.append(fit)
            probs[i] = fit.coefficients
            errs[i] = fit.coefficient_errors
    return TruthTable(probs, errs, mode, shots, repetitions, leak, fits)


def flop_trace(ctx: RunContext, seq: SequenceSpec | None, prep, noise: NoiseModel | None, flop: FlopReadout,
               shots: int, seed: int, stream: int = 0, threads: int = 1, eta: float = 0.068) -> np.ndarray:
    """P_D(tau) rows (tau, P_D, stderr) after ``seq``, one independent shot set per tau."""
    seq = seq or SequenceSpec(())
    taus = flop.taus()
    # the compensation beam is off during readout
    readout = RunContext(ctx.space, ctx.modes, ShiftBudget(), ctx.axial_frequency)

    def state(point, rng=None):
        offset = noise.sample_offset(rng) if noise is not None else 0.0
        out = run_in_context(ctx, seq, prep, noise, rng, offset=offset)
        amps = readout.apply(Pulse(flop.event(eta, taus[point])), out.amplitudes, offset)
        return StateVector(ctx.space, amps)

    # without noise every shot at a given tau sees the same state
    fixed = [state(point) for point in range(len(taus))] if noise is None else None

    def one(j):
        point, k = divmod(j, shots)
        rng = shot_rng(seed, k, stream=1000 * (stream + 1) + point)
        final = fixed[point] if fixed is not None else state(point, rng)
        return measure(final, rng).internal == "D"

    hits = np.array(map_shots(one, len(taus) * shots, threads)).reshape(len(taus), shots)
    k = hits.sum(axis=1)
    ph = (k + 1) / (shots + 2)
    return np.column_stack([taus, k / shots, np.sqrt(ph * (1 - ph) / shots)])


# --- Rabi flops ------------------------------------------------------------------

@dataclass
class FlopTraces:
    traces: dict  # input label -> (points, 3) array
    fits: dict  # input label -> FitResult

    def ratio(self, trace_12: str = "D,1", trace_01: str = "S,0") -> tuple[float, float]:
        """Omega_12 from one trace over Omega_01 from another, with propagated error."""
        a, b = self.fits[trace_12], self.fits[trace_01]
        r = a.omega_12 / b.omega_01
        err = r * np.hypot(a.stderr[5] / a.omega_12, b.stderr[4] / b.omega_01)
        return float(r), float(err)

    def to_csv(self) -> str:
        rows = []
        for lab in COMPUTATIONAL_LABELS:
            for tau, p, e in self.traces[lab]:
                rows.append((lab, tau * 1e6, p, e))
        return _csv(["input", "tau_us", "P_D", "stderr"], rows)

    def summary(self) -> dict:
        out = {"fits": {lab: f.to_dict() for lab, f in self.fits.items()}}
        for num, den in (("D,1", "S,0"), ("S,1", "S,0")):
            r, e = self.ratio(num, den)
            out[f"omega12[{num}]/omega01[{den}]"] = {"ratio": r, "stderr": e}
        return out


def rabi_flops(ctx: RunContext, seq: SequenceSpec, noise: NoiseModel | None, flop: FlopReadout,
               shots: int = 100, seed: int = 0, threads: int = 1, eta: float = 0.068) -> FlopTraces:
    """Sideband flops after the gate for every computational input, each fitted unconstrained."""
    traces, fits = {}, {}
    for i, (s, n) in enumerate(COMPUTATIONAL_STATES):
        lab = COMPUTATIONAL_LABELS[i]
        data = flop_trace(ctx, seq, PrepRecipe(s, (n,)), noise, flop, shots, seed, stream=i,
                          threads=threads, eta=eta)
        traces[lab] = data
        fits[lab] = analysis.fit_flop(data, initial_omega_01=flop.omega_01, shots=shots)
    return FlopTraces(traces, fits)


# --- N-ion entangling scan -----------------------------------------------------------

@dataclass
class GhzScan:
    ion_count: int
    times: np.ndarray
    p_s: np.ndarray
    p_d: np.ndarray
    fidelity: np.ndarray
    phase: np.ndarray
    entangle_time: float
    dimension: int
    guard: float = 0.25
    spectators: tuple = ()

    @property
    def epsilon(self) -> np.ndarray:
        return 1 - self.p_s - self.p_d

    def best_index(self) -> int:
        """Highest P_S + P_D among points where both populations exceed ``guard``.

        The guard excludes the trivial revival at t=0, where R2' undoes R1.
        """
        ok = np.minimum(self.p_s, self.p_d) >= self.guard
        if not np.any(ok):
            return int(np.argmax(self.fidelity))
        score = np.where(ok, self.p_s + self.p_d, -np.inf)
        return int(np.argmax(score))

    def at(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def to_csv(self) -> str:
        rows = [(t * 1e6, a, b, 1 - a - b, f, ph) for t, a, b, f, ph in
                zip(self.times, self.p_s, self.p_d, self.fidelity, self.phase)]
        return _csv(["phi_time_us", "P_all_S", "P_all_D", "epsilon", "ghz_fidelity", "phase_rad"], rows)

    def summary(self) -> dict:
        b = self.best_index()
        k = self.at(900e-6)
        return {"ion_count": self.ion_count, "dimension": self.dimension,
                "spectator_modes": {"direction": "axial", "indices": list(self.spectators)},
                "entangle_time_us": self.entangle_time * 1e6,
                "best": {"phi_time_us": self.times[b] * 1e6, "P_all_S": self.p_s[b], "P_all_D": self.p_d[b],
                         "epsilon": self.epsilon[b], "ghz_fidelity": self.fidelity[b]},
                "at_900us": {"phi_time_us": self.times[k] * 1e6, "P_all_S": self.p_s[k],
                             "P_all_D": self.p_d[k], "epsilon": self.epsilon[k]}}


@dataclass(frozen=True)
class GhzSetup:
    ion_count: int = 5
    rabi_0: float = TWO_PI * 230e3
    detuning: float = TWO_PI * 60e3
    eta_single: float = 0.068
    axial_frequency: float = TWO_PI * 1.712e6
    bus_n_max: int = 2
    spectators: int = 2
    spectator_n_max: int = 2
    carrier_rabi: float = DEFAULT_CARRIER_RABI

    def build(self):
        modes = normal_modes(IonCrystal(self.ion_count, self.axial_frequency, self.eta_single))
        specs = spectator_modes(modes, self.spectators) if self.spectators else []
        space = SpaceSpec(self.ion_count, ((0, self.bus_n_max),) + tuple((m, self.spectator_n_max) for m in specs))
        return RunContext(space, modes, ShiftBudget(), self.axial_frequency)


def ghz_scan(setup: GhzSetup, times) -> GhzScan:
    """R1, bus-mode dispersive pulse of each length in ``times``, R2'."""
    ctx = setup.build()
    space, n = ctx.space, setup.ion_count
    zeros = [0] * len(space.mode_list)
    r1 = carrier_pulse(np.pi / 2, R1_PHASE, setup.carrier_rabi)
    r2 = ctx.element_unitary(carrier_pulse(np.pi / 2, R1_PHASE + r2_phase_offset(n), setup.carrier_rabi))
    start = ctx.apply(r1, prepare(space, "S" * n, zeros).amplitudes)
    event = PulseEvent(BlueSideband(0), setup.rabi_0, setup.detuning, 0.0, 0.0)
    prop, frame = ctx._propagator(event, 0.0)
    iS, iD = space.index("S" * n, zeros), space.index("D" * n, zeros)
    p_s, p_d, fid, ph = [], [], [], []
    times = np.asarray(times, dtype=float)
    for t in times:
        amps = r2 @ (np.exp(-1j * frame * t) * prop.apply(start, t))
        p_s.append(abs(amps[iS]) ** 2)
        p_d.append(abs(amps[iD]) ** 2)
        f, phase = ghz_fidelity(StateVector(space, amps))
        fid.append(f)
        ph.append(phase)
    te = entangle_time(ctx.modes.eta[0, 0], setup.rabi_0, setup.detuning)
    return GhzScan(n, times, np.array(p_s), np.array(p_d), np.array(fid), np.array(ph), te, space.dimension,
                   spectators=tuple(int(m) for m, _ in space.mode_list[1:]))


def ghz_scaling(setup: GhzSetup, ion_counts=(2, 3, 4, 5), points: int = 400) -> list[dict]:
    """Best entangling time per ion count on the bus mode alone.

    The bus-mode Lamb-Dicke factor falls as 1/sqrt(N) through the crystal
    mode analysis; the report is empirical and carries no tolerance.
    """
    out = []
    for n in ion_counts:
        s = GhzSetup(n, setup.rabi_0, setup.detuning, setup.eta_single, setup.axial_frequency,
                     setup.bus_n_max, 0, 1, setup.carrier_rabi)
        te = entangle_time(setup.eta_single / np.sqrt(n), setup.rabi_0, setup.detuning)
        scan = ghz_scan(s, np.linspace(0, 2 * te, points))
        b = scan.best_index()
        out.append({"ion_count": n, "best_phi_time_us": scan.times[b] * 1e6,
                    "ghz_fidelity": scan.fidelity[b], "entangle_time_us": scan.entangle_time * 1e6})
    return out


# --- Ramsey and spin echo ------------------------------------------------------------

@dataclass
class EchoResult:
    rows: list  # (sequence, phase, P_D, stderr)
    plain: analysis.RamseyFit
    echo: analysis.RamseyFit
    total_time: float
    detuning_sigma: float

    def to_csv(self) -> str:
        return _csv(["sequence", "phase_rad", "P_D", "stderr"], self.rows)

    def summary(self) -> dict:
        return {"total_time_us": self.total_time * 1e6, "detuning_sigma_hz": self.detuning_sigma / TWO_PI,
                "plain_contrast": self.plain.contrast, "echo_contrast": self.echo.contrast,
                "plain_fit": self.plain.to_dict(), "echo_fit": self.echo.to_dict()}


def echo_sequence(total_time: float, theta: float, echo: bool,
                  carrier_rabi: float = DEFAULT_CARRIER_RABI) -> SequenceSpec:
    """R1, then either Delay(T) or Delay(T/2) EchoPi Delay(T/2), then R2 at phase ``theta``."""
    middle = (Delay(total_time / 2), EchoPi(0.0, carrier_rabi), Delay(total_time / 2)) if echo \
        else (Delay(total_time),)
    return SequenceSpec((carrier_pulse(np.pi / 2, R1_PHASE, carrier_rabi), *middle,
                         carrier_pulse(np.pi / 2, R2_PHASE + theta, carrier_rabi)))


def spin_echo(noise: NoiseModel, total_time: float = 2e-3, shots: int = 100, phase_points: int = 16,
              seed: int = 0, threads: int = 1, carrier_rabi: float = DEFAULT_CARRIER_RABI) -> EchoResult:
    """Ramsey fringes over ``total_time`` with and without a refocusing pi pulse."""
    ctx = RunContext(SpaceSpec(1, ((0, 1),)), single_ion_modes())
    thetas = np.linspace(0, TWO_PI, phase_points, endpoint=False)
    rows, fits = [], {}
    for s_idx, echo in enumerate((False, True)):
        name = "echo" if echo else "ramsey"
        data = []
        for j, th in enumerate(thetas):
            seq = echo_sequence(total_time, th, echo, carrier_rabi)

            def one(k, seq=seq, j=j):
                rng = shot_rng(seed, k, stream=100 * s_idx + j)
                out = run_in_context(ctx, seq, PrepRecipe("S", (0,)), noise, rng)
                return measure(out, rng).internal == "D"

            k = sum(map_shots(one, shots, threads))
            ph = (k + 1) / (shots + 2)
            data.append((th, k / shots, float(np.sqrt(ph * (1 - ph) / shots))))
            rows.append((name, th, k / shots, data[-1][2]))
        fits[name] = analysis.ramsey_contrast(data)
    return EchoResult(rows, fits["ramsey"], fits["echo"], total_time, noise.detuning_sigma)
