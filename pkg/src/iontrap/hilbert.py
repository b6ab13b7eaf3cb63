"""Composite state space of two-level ions and truncated harmonic modes.

Basis ordering (stable, relied on by state dumps): the internal string is
the major index, ion 0 most significant, S=0 and D=1.  Mode occupations
follow in ``mode_list`` order with the last mode varying fastest.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_DIMENSION_CAP = 100_000
NORM_TOL = 1e-10


@dataclass(frozen=True)
class SpaceSpec:
    ion_count: int
    mode_list: tuple = ((0, 3),)  # (mode id, n_max)
    dimension_cap: int = DEFAULT_DIMENSION_CAP

    def __post_init__(self):
        if self.ion_count < 1:
            raise ValueError("ion_count must be >= 1")
        object.__setattr__(self, "mode_list", tuple((int(m), int(n)) for m, n in self.mode_list))
        for mode_id, n_max in self.mode_list:
            if n_max < 1:
                raise ValueError(f"mode {mode_id}: n_max must be >= 1, got {n_max}")
        ids = [m for m, _ in self.mode_list]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate mode ids in mode_list")
        if self.dimension > self.dimension_cap:
            raise ValueError(f"Hilbert dimension {self.dimension} exceeds cap {self.dimension_cap}")

    @property
    def mode_dims(self) -> tuple:
        return tuple(n + 1 for _, n in self.mode_list)

    @property
    def motional_dim(self) -> int:
        return int(np.prod(self.mode_dims, dtype=int)) if self.mode_list else 1

    @property
    def internal_dim(self) -> int:
        return 2**self.ion_count

    @property
    def dimension(self) -> int:
        return self.internal_dim * self.motional_dim

    @property
    def shape(self) -> tuple:
        """Tensor shape: one axis per ion, then one per mode."""
        return (2,) * self.ion_count + self.mode_dims

    def mode_position(self, mode_id: int) -> int:
        for k, (m, _) in enumerate(self.mode_list):
            if m == mode_id:
                return k
        raise KeyError(f"mode {mode_id} not in space")

    def index(self, internal: str, phonons: Sequence[int]) -> int:
        internal = internal.upper()
        if len(internal) != self.ion_count or set(internal) - {"S", "D"}:
            raise ValueError(f"internal string {internal!r} invalid for {self.ion_count} ions")
        phonons = list(phonons)
        if len(phonons) != len(self.mode_list):
            raise ValueError(f"expected {len(self.mode_list)} occupations, got {len(phonons)}")
        for (mode_id, n_max), n in zip(self.mode_list, phonons):
            if not 0 <= n <= n_max:
                raise ValueError(f"occupation {n} of mode {mode_id} outside truncation 0..{n_max}")
        bits = [1 if c == "D" else 0 for c in internal]
        return int(np.ravel_multi_index(tuple(bits) + tuple(phonons), self.shape))

    def label(self, index: int) -> str:
        digits = np.unravel_index(index, self.shape)
        internal = "".join("SD"[b] for b in digits[: self.ion_count])
        phon = "".join(str(int(n)) for n in digits[self.ion_count:])
        return f"{internal},{phon}" if self.mode_list else internal

    def labels(self) -> list[str]:
        return [self.label(i) for i in range(self.dimension)]

    def describe(self) -> str:
        modes = " ".join(f"{m}:{n}" for m, n in self.mode_list)
        return f"ions={self.ion_count} modes={modes}"


@dataclass
class StateVector:
    space: SpaceSpec
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.space.dimension,):
            raise ValueError("amplitude vector does not match space dimension")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.space, self.amplitudes.copy())

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def amplitude(self, internal: str, phonons: Sequence[int]) -> complex:
        return complex(self.amplitudes[self.space.index(internal, phonons)])


@dataclass(frozen=True)
class MeasurementRecord:
    """One projective readout: per-ion internal outcomes, optional phonon numbers."""

    internal: str
    phonons: tuple | None = None

    @property
    def label(self) -> str:
        if self.phonons is None:
            return self.internal
        return f"{self.internal},{''.join(map(str, self.phonons))}"


# name used for the outcome record type in the design notes
ErrorBudgetTag = MeasurementRecord


def prepare(space: SpaceSpec, internal: str, phonons: Sequence[int] | None = None) -> StateVector:
    """Basis state |internal, phonons>."""
    if phonons is None:
        phonons = [0] * len(space.mode_list)
    amps = np.zeros(space.dimension, dtype=complex)
    amps[space.index(internal, phonons)] = 1.0
    return StateVector(space, amps)


def superpose(*terms: tuple[complex, StateVector]) -> StateVector:
    """Normalized sum of ``(coefficient, state)`` pairs over one space."""
    space = terms[0][1].space
    amps = sum(c * s.amplitudes for c, s in terms)
    return StateVector(space, amps / np.linalg.norm(amps))


def _check_normalized(state: StateVector):
    nrm = state.norm
    if abs(nrm - 1.0) > NORM_TOL:
        raise ValueError(f"state not normalized (norm {nrm:.12f})")


def populations(state: StateVector, ions: Iterable[int] | None = None,
                modes: Iterable[int] | None = None) -> dict[str, float]:
    """Marginal probability table.

    ``ions`` selects ion indices to keep (default all), ``modes`` selects
    mode ids to keep (default none).  Keys are labels like ``"SD"`` or
    ``"SD,01"``; the probabilities of unselected subsystems are summed out.
    """
    _check_normalized(state)
    space = state.space
    ions = list(range(space.ion_count)) if ions is None else sorted(ions)
    modes = [] if modes is None else list(modes)
    mode_axes = [space.ion_count + space.mode_position(m) for m in modes]
    keep = list(ions) + mode_axes
    p = state.probabilities().reshape(space.shape)
    drop = tuple(ax for ax in range(p.ndim) if ax not in keep)
    marg = p.sum(axis=drop) if drop else p
    # summed array axes come out in ascending order; put them in `keep` order
    marg = np.transpose(marg, np.argsort(np.argsort(keep)))
    out = {}
    for idx in itertools.product(*(range(s) for s in marg.shape)):
        internal = "".join("SD"[b] for b in idx[: len(ions)])
        phon = "".join(str(n) for n in idx[len(ions):])
        key = f"{internal},{phon}" if modes else internal
        out[key] = float(marg[idx])
    return out


def fidelity(state: StateVector, target: StateVector) -> float:
    """|<target|state>|^2."""
    if state.space.dimension != target.space.dimension:
        raise ValueError("fidelity between states of different dimension")
    return float(min(1.0, abs(np.vdot(target.amplitudes, state.amplitudes)) ** 2))


def measure(state: StateVector, rng: np.random.Generator, phonon_modes: Sequence[int] | None = None
            ) -> MeasurementRecord:
    """Sample one projective readout from the Born probabilities.

    Internal states of all ions are always read; occupations of the mode ids
    in ``phonon_modes`` are read as well when given.
    """
    _check_normalized(state)
    space = state.space
    p = state.probabilities()
    p = p / p.sum()
    k = int(rng.choice(space.dimension, p=p))
    digits = np.unravel_index(k, space.shape)
    internal = "".join("SD"[b] for b in digits[: space.ion_count])
    phonons = None
    if phonon_modes is not None:
        phonons = tuple(int(digits[space.ion_count + space.mode_position(m)]) for m in phonon_modes)
    return MeasurementRecord(internal, phonons)


def leakage(state: StateVector, n_comp: int = 1) -> float:
    """Population with any mode occupation above ``n_comp``."""
    space = state.space
    p = state.probabilities().reshape(space.internal_dim, *space.mode_dims)
    total = 0.0
    for idx in itertools.product(*(range(d) for d in space.mode_dims)):
        if max(idx, default=0) > n_comp:
            total += p[(slice(None),) + idx].sum()
    return float(total)


def dump_state(state: StateVector, threshold: float = 1e-12) -> str:
    """CSV text: header comment with the space, then (label, re, im) rows."""
    buf = io.StringIO()
    buf.write(f"# {state.space.describe()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["basis", "re", "im"])
    for i, a in enumerate(state.amplitudes):
        if abs(a) >= threshold:
            w.writerow([state.space.label(i), repr(float(a.real)), repr(float(a.imag))])
    return buf.getvalue()


def load_state(text: str) -> StateVector:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError("state dump is missing the space header line")
    fields = dict(tok.split("=", 1) for tok in lines[0][1:].split() if "=" in tok)
    ions = int(fields["ions"])
    mode_toks = lines[0].split("modes=", 1)[1].split()
    mode_list = tuple(tuple(int(x) for x in tok.split(":")) for tok in mode_toks)
    space = SpaceSpec(ions, mode_list)
    amps = np.zeros(space.dimension, dtype=complex)
    for row in csv.DictReader(lines[1:]):
        internal, _, phon = row["basis"].partition(",")
        amps[space.index(internal, [int(c) for c in phon])] = complex(float(row["re"]), float(row["im"]))
    return StateVector(space, amps)
