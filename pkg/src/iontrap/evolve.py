"""Exact propagation under piecewise-constant pulse schedules plus shot noise.

Every sequence element has a time-independent Hamiltonian (the quasi-static
detuning offset is constant within a shot), so each step is an exact matrix
exponential obtained from a Hermitian eigendecomposition.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

from .hamiltonian import CARRIER, PulseEvent, ShiftBudget, build_hamiltonian, frame_energies, number_diagonals
from .hilbert import SpaceSpec, StateVector, measure, prepare
from .modes import ModeSet

HERMITIAN_TOL = 1e-12
DEFAULT_CARRIER_RABI = 2 * np.pi * 100e3


# --- sequence elements ---------------------------------------------------

@dataclass(frozen=True)
class Pulse:
    event: PulseEvent

    @property
    def duration(self) -> float:
        return self.event.duration


@dataclass(frozen=True)
class Delay:
    duration: float


@dataclass(frozen=True)
class EchoPi:
    """Resonant carrier pi pulse on all ions."""

    phase: float = 0.0
    rabi_0: float = DEFAULT_CARRIER_RABI

    @property
    def duration(self) -> float:
        return np.pi / self.rabi_0

    def as_pulse(self) -> Pulse:
        return Pulse(PulseEvent(CARRIER, self.rabi_0, 0.0, self.phase, self.duration))


@dataclass(frozen=True)
class Barrier:
    label: str
    duration: float = 0.0


Element = Union[Pulse, Delay, EchoPi, Barrier]


@dataclass(frozen=True)
class SequenceSpec:
    elements: tuple

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if not np.isfinite(self.total_duration):
            raise ValueError("sequence duration must be finite")

    @property
    def total_duration(self) -> float:
        return float(sum(e.duration for e in self.elements))

    def __iter__(self):
        return iter(self.elements)

    def __len__(self):
        return len(self.elements)


def carrier_pulse(area: float, phase: float, rabi_0: float = DEFAULT_CARRIER_RABI) -> Pulse:
    """Resonant carrier pulse of the given area (rad) on all ions."""
    return Pulse(PulseEvent(CARRIER, rabi_0, 0.0, phase, area / rabi_0))


# --- noise ---------------------------------------------------------------

@dataclass(frozen=True)
class PrepRecipe:
    internal: str
    phonons: tuple = (0,)

    def __post_init__(self):
        object.__setattr__(self, "phonons", tuple(int(n) for n in self.phonons))

    @property
    def label(self) -> str:
        return f"{self.internal},{''.join(map(str, self.phonons))}"


@dataclass(frozen=True)
class NoiseModel:
    """Per-shot error channels.

    ``prep_fidelity`` maps the prepared Fock number (of the first mode) to
    the preparation success probability.  What replaces the state on a
    failure depends on ``prep_error_mode``:

    ``"split"``
        the neighbouring Fock state (n-1, or n+1 from the ground state) with
        probability ``prep_motional_weight``, otherwise the flipped internal
        state.
    ``"pulses"``
        one step of the preparation recipe fails, picked with weight equal
        to that step's infidelity: ground-state cooling (leaves n+1), or one
        of the alternating sideband/carrier pi pulses that climb from
        |S,0> (the failed pulse leaves the state unchanged, later pulses
        still act).  Single-ion only.

    ``detuning_sigma`` is the standard deviation of a Gaussian carrier
    detuning drawn once per shot.
    """

    detuning_sigma: float = 0.0
    prep_fidelity: dict = field(default_factory=dict)
    ramsey_contrast_loss: float = 0.0
    prep_motional_weight: float = 0.5
    prep_error_mode: str = "split"
    cooling_error: float = 0.02
    sideband_pi_error: float = 0.02
    carrier_pi_error: float = 0.01
    dephasing_enabled: bool = True
    prep_enabled: bool = True

    def __post_init__(self):
        if self.detuning_sigma < 0:
            raise ValueError("detuning_sigma must be >= 0")
        for n, p in self.prep_fidelity.items():
            if not 0 <= p <= 1:
                raise ValueError(f"prep fidelity for n={n} outside [0, 1]")
        if self.prep_error_mode not in ("split", "pulses"):
            raise ValueError(f"unknown prep_error_mode {self.prep_error_mode!r}")
        for name in ("ramsey_contrast_loss", "prep_motional_weight", "cooling_error",
                     "sideband_pi_error", "carrier_pi_error"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} outside [0, 1]")

    @staticmethod
    def sigma_for_contrast_loss(loss: float, delay: float) -> float:
        """Detuning spread giving Ramsey contrast ``1 - loss`` after ``delay``.

        Gaussian quasi-static noise gives contrast exp(-sigma^2 t^2 / 2).
        """
        if not 0 <= loss < 1:
            raise ValueError("contrast loss must lie in [0, 1)")
        if delay <= 0:
            raise ValueError("delay must be positive")
        return float(np.sqrt(-2.0 * np.log1p(-loss)) / delay)

    @classmethod
    def calibrated(cls, contrast_loss: float, delay: float, **kw) -> "NoiseModel":
        sigma = cls.sigma_for_contrast_loss(contrast_loss, delay)
        return cls(detuning_sigma=sigma, ramsey_contrast_loss=contrast_loss, **kw)

    def sample_offset(self, rng: np.random.Generator) -> float:
        if not self.dephasing_enabled or self.detuning_sigma == 0:
            return 0.0
        return float(rng.normal(0.0, self.detuning_sigma))

    def sample_prep(self, recipe: PrepRecipe, rng: np.random.Generator, n_max: int) -> PrepRecipe:
        if not self.prep_enabled or not self.prep_fidelity:
            return recipe
        n = recipe.phonons[0] if recipe.phonons else 0
        fid = self.prep_fidelity.get(n, 1.0)
        if rng.random() < fid:
            return recipe
        if self.prep_error_mode == "pulses":
            return self._failed_recipe(recipe, rng, n_max)
        if rng.random() < self.prep_motional_weight:
            m = n - 1 if n > 0 else min(n + 1, n_max)
            return PrepRecipe(recipe.internal, (m,) + recipe.phonons[1:])
        flipped = recipe.internal.translate(str.maketrans("SD", "DS"))
        return PrepRecipe(flipped, recipe.phonons)


    def _failed_recipe(self, recipe: PrepRecipe, rng: np.random.Generator, n_max: int) -> PrepRecipe:
        if len(recipe.internal) != 1:
            raise ValueError("pulse-sequence preparation errors are defined for one ion")
        state = (recipe.internal, recipe.phonons[0])
        if state == ("D", 0):
            steps = ["carrier"]
        else:
            # |S,0> -bsb-> |D,1> -car-> |S,1> -bsb-> |D,2> ...
            steps = []
            cur = ("S", 0)
            while cur != state:
                if cur[0] == "S":
                    steps.append("bsb")
                    cur = ("D", cur[1] + 1)
                else:
                    steps.append("carrier")
                    cur = ("S", cur[1])
        weights = np.array([self.cooling_error] + [
            self.sideband_pi_error if k == "bsb" else self.carrier_pi_error for k in steps])
        if weights.sum() == 0:
            return recipe
        j = int(rng.choice(len(weights), p=weights / weights.sum()))
        if j == 0:
            return PrepRecipe(recipe.internal, (min(state[1] + 1, n_max),) + recipe.phonons[1:])
        internal, n = "S", 0
        for k, kind in enumerate(steps):
            if k == j - 1:
                continue
            if kind == "carrier":
                internal = "D" if internal == "S" else "S"
            elif internal == "S":
                internal, n = "D", n + 1
            elif n > 0:
                internal, n = "S", n - 1
        return PrepRecipe(internal, (n,) + recipe.phonons[1:])


# --- propagation ---------------------------------------------------------

class Propagator:
    """Eigendecomposition of a Hermitian operator, reusable for many durations."""

    def __init__(self, h: np.ndarray):
        h = np.asarray(h, dtype=complex)
        err = np.max(np.abs(h - h.conj().T)) if h.size else 0.0
        scale = max(1.0, np.max(np.abs(h)) if h.size else 1.0)
        if err > HERMITIAN_TOL * scale:
            raise ValueError(f"operator not Hermitian (max |H - H^dag| = {err:.3e})")
        self.energies, self.vectors = np.linalg.eigh(0.5 * (h + h.conj().T))

    def unitary(self, duration: float) -> np.ndarray:
        return (self.vectors * np.exp(-1j * self.energies * duration)) @ self.vectors.conj().T

    def apply(self, amplitudes: np.ndarray, duration: float) -> np.ndarray:
        coeff = self.vectors.conj().T @ amplitudes
        return self.vectors @ (np.exp(-1j * self.energies * duration) * coeff)


def propagate(h: np.ndarray, state: StateVector, duration: float) -> StateVector:
    """exp(-i H duration) applied to ``state``."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if duration == 0:
        return state.copy()
    return StateVector(state.space, Propagator(h).apply(state.amplitudes, duration))


@dataclass
class RunContext:
    """Static inputs of a simulation: space, modes, and the shift budget."""

    space: SpaceSpec
    modes: ModeSet
    budget: ShiftBudget = ShiftBudget()
    axial_frequency: float | None = None

    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def _static_operator(self, event: PulseEvent):
        key = replace(event, duration=0.0)
        hit = self._cache.get(key)
        if hit is None:
            h = build_hamiltonian(self.space, self.modes, event, self.budget, self.axial_frequency)
            frame = frame_energies(self.space, self.modes, event, self.axial_frequency)
            hit = (h, frame, Propagator(h))
            self._cache[key] = hit
        return hit

    def pulse_operator(self, event: PulseEvent, offset: float = 0.0):
        h, frame, _ = self._static_operator(event)
        h = h.copy()
        if offset:
            n_d, _ = number_diagonals(self.space)
            h[np.diag_indices_from(h)] += offset * n_d
        return h, frame

    def _propagator(self, event: PulseEvent, offset: float):
        if not offset:
            _, frame, prop = self._static_operator(event)
            return prop, frame
        h, frame = self.pulse_operator(event, offset)
        return Propagator(h), frame

    def element_unitary(self, element: Element, offset: float = 0.0) -> np.ndarray | None:
        """Unitary of one element in the common qubit frame (None for identity)."""
        if isinstance(element, Barrier):
            return None
        if isinstance(element, EchoPi):
            element = element.as_pulse()
        if isinstance(element, Delay):
            if element.duration == 0 or offset == 0:
                return None
            n_d, _ = number_diagonals(self.space)
            return np.diag(np.exp(-1j * offset * n_d * element.duration))
        prop, frame = self._propagator(element.event, offset)
        t = element.event.duration
        u = prop.unitary(t)
        return np.exp(-1j * frame * t)[:, None] * u

    def apply(self, element: Element, amps: np.ndarray, offset: float = 0.0) -> np.ndarray:
        if isinstance(element, Barrier):
            return amps
        if isinstance(element, Delay):
            if element.duration == 0 or offset == 0:
                return amps
            n_d, _ = number_diagonals(self.space)
            return np.exp(-1j * offset * n_d * element.duration) * amps
        if isinstance(element, EchoPi):
            element = element.as_pulse()
        t = element.event.duration
        if t == 0:
            return amps
        prop, frame = self._propagator(element.event, offset)
        out = prop.apply(amps, t)
        return np.exp(-1j * frame * t) * out


def run_sequence(space: SpaceSpec, modes: ModeSet, seq: SequenceSpec,
                 initial: StateVector | PrepRecipe, budget: ShiftBudget = ShiftBudget(),
                 noise: NoiseModel | None = None, rng: np.random.Generator | None = None,
                 axial_frequency: float | None = None, snapshots: dict | None = None,
                 offset: float | None = None) -> StateVector:
    """Apply ``seq`` to ``initial``.

    With a noise model one shot is simulated: preparation error first (only
    when ``initial`` is a :class:`PrepRecipe`), then a single detuning offset
    that stays fixed for the whole sequence.  ``offset`` forces that value
    instead of sampling it.  States at :class:`Barrier` elements are stored
    in ``snapshots`` when a dict is passed.
    """
    ctx = RunContext(space, modes, budget, axial_frequency)
    return run_in_context(ctx, seq, initial, noise, rng, snapshots, offset)


def run_in_context(ctx: RunContext, seq: SequenceSpec, initial, noise=None, rng=None,
                   snapshots=None, offset=None) -> StateVector:
    if noise is not None and rng is None:
        raise ValueError("a noisy run needs an rng stream")
    space = ctx.space
    if isinstance(initial, PrepRecipe):
        recipe = initial
        if noise is not None:
            recipe = noise.sample_prep(recipe, rng, space.mode_list[0][1] if space.mode_list else 0)
        state = prepare(space, recipe.internal, recipe.phonons)
    else:
        state = initial
    if offset is None:
        offset = noise.sample_offset(rng) if noise is not None else 0.0
    amps = state.amplitudes
    for element in seq:
        amps = ctx.apply(element, amps, offset)
        if snapshots is not None and isinstance(element, Barrier):
            snapshots[element.label] = StateVector(space, amps.copy())
    return StateVector(space, amps)


# --- Monte Carlo -----------------------------------------------------------

def shot_rng(seed: int, shot: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one shot, derived from (seed, stream, shot) only."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream, shot))))


@dataclass
class Statistics:
    counts: dict
    shots: int

    @property
    def labels(self) -> list[str]:
        return sorted(self.counts)

    def frequency(self, label: str) -> float:
        return self.counts.get(label, 0) / self.shots

    def stderr(self, label: str) -> float:
        p = self.frequency(label)
        return float(np.sqrt(p * (1 - p) / self.shots))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["outcome", "count", "frequency", "stderr"])
        for lab in self.labels:
            w.writerow([lab, self.counts[lab], f"{self.frequency(lab):.6f}", f"{self.stderr(lab):.6f}"])
        return buf.getvalue()


def internal_readout(state: StateVector, rng: np.random.Generator) -> str:
    return measure(state, rng).internal


def map_shots(fn: Callable[[int], object], shots: int, threads: int = 1) -> list:
    """``[fn(0), ..., fn(shots-1)]``, optionally on a thread pool; order is preserved."""
    if threads <= 1:
        return [fn(k) for k in range(shots)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(shots)))


def monte_carlo(space: SpaceSpec, modes: ModeSet, seq: SequenceSpec, prep: PrepRecipe | StateVector,
                budget: ShiftBudget = ShiftBudget(), noise: NoiseModel | None = None, shots: int = 100,
                seed: int = 0, threads: int = 1, readout: Callable = internal_readout,
                axial_frequency: float | None = None, stream: int = 0) -> Statistics:
    """Repeat the sequence ``shots`` times and histogram the readout labels.

    Shot k uses ``shot_rng(seed, k, stream)`` for everything it samples, so the
    result does not depend on ``threads``.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    ctx = RunContext(space, modes, budget, axial_frequency)

    def one(k):
        rng = shot_rng(seed, k, stream)
        final = run_in_context(ctx, seq, prep, noise, rng if noise is not None else None)
        return readout(final, rng)

    counts: dict = {}
    for lab in map_shots(one, shots, threads):
        counts[lab] = counts.get(lab, 0) + 1
    return Statistics(counts, shots)
