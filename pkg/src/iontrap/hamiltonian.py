"""Rotating-frame laser-ion interaction operators.

Conventions (hbar = 1, angular frequencies in rad/s):

* A coupling of Rabi frequency W between two levels enters as
  ``(W/2) e^{i phase} |up><down| + h.c.`` so a resonant pulse of length t
  transfers ``sin^2(W t / 2)``.
* Sideband pulses are written in a frame where every D ion carries energy
  ``-detuning`` and spectator mode m carries ``(nu_m - nu_bus) n_m``; the
  matching frame energies (see :func:`frame_energies`) are undone by the
  propagator so pulses and free delays share the qubit interaction frame.
* Light shifts: |S,n> moves up by (n+1) k and |D,n> down by n k with
  ``k = eta^2 Omega0^2 / (4 detuning)``, so the S-D (Ramsey) rate is
  ``(2n+1) k`` plus the n-independent budget terms.
"""
from __future__ import annotations

import csv
import functools
import io
import warnings
from dataclasses import dataclass

import numpy as np

from .hilbert import SpaceSpec
from .modes import IonCrystal, ModeSet, normal_modes

RESIDUAL_BOUND = 2 * np.pi * 300.0  # rad/s


class RegimeError(ValueError):
    """Parameters outside the dispersive regime."""


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Coupling:
    kind: str  # "carrier" | "blue" | "red" | "static"
    mode: int | None = None

    def __post_init__(self):
        if self.kind not in ("carrier", "blue", "red", "static"):
            raise ValueError(f"unknown coupling kind {self.kind!r}")
        if self.kind in ("blue", "red") and self.mode is None:
            raise ValueError("sideband coupling needs a mode id")


CARRIER = Coupling("carrier")
STATIC_SHIFT = Coupling("static")


def BlueSideband(mode: int = 0) -> Coupling:
    return Coupling("blue", mode)


def RedSideband(mode: int = 0) -> Coupling:
    return Coupling("red", mode)


@dataclass(frozen=True)
class PulseEvent:
    coupling: Coupling
    rabi_0: float
    detuning: float = 0.0
    phase: float = 0.0
    duration: float = 0.0

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError("pulse duration must be >= 0")


@dataclass(frozen=True)
class ShiftBudget:
    """Lumped n-independent S-D shifts (rad/s) applied while the dispersive beam is on."""

    delta_other: float = 0.0
    delta_comp: float = 0.0

    @property
    def total(self) -> float:
        return self.delta_other + self.delta_comp


# --- closed forms -----------------------------------------------------------

def sideband_rabi(n: int, eta: float, rabi_0: float) -> float:
    """Blue-sideband Rabi frequency between |S,n> and |D,n+1>."""
    if n < 0:
        raise ValueError("occupation must be >= 0")
    return eta * rabi_0 * np.sqrt(n + 1)


def dispersive_shift(n: int, eta: float, rabi_0: float, detuning: float) -> float:
    """Light shift of |S,n> from its blue-sideband partner |D,n+1>.

    The partner moves by the negative of the returned value.
    """
    if detuning == 0:
        raise RegimeError("zero detuning: resonant coupling has no dispersive limit")
    return sideband_rabi(n, eta, rabi_0) ** 2 / (4 * detuning)


def _kappa(eta, rabi_0, detuning) -> float:
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    detuning = np.broadcast_to(np.atleast_1d(np.asarray(detuning, dtype=float)), eta.shape)
    if np.any(detuning == 0):
        raise RegimeError("zero detuning: resonant coupling has no dispersive limit")
    return float(np.sum(eta**2 * rabi_0**2 / (4 * detuning)))


def ramsey_phase_rate(n: int, eta, rabi_0: float, detuning, budget: ShiftBudget = ShiftBudget()) -> float:
    """Net S-D phase rate for Fock state n: ``(2n+1) k + budget``.

    ``eta`` and ``detuning`` may be arrays over several modes, in which case
    their shifts add (each mode with its own detuning).
    """
    return (2 * n + 1) * _kappa(eta, rabi_0, detuning) + budget.total


def dressed_ramsey_rate(n: int, eta: float, rabi_0: float, detuning: float, budget: float = 0.0) -> float:
    """Exact S-D rate of |n> for one ion on one mode.

    Each two-level pair (|S,n>, |D,n+1>) is diagonalized in closed form; the
    dressed |S,n> comes from the pair above it in the ladder, the dressed
    |D,n> from the pair below.  ``budget`` (rad/s, on |S>) adds to the rate
    and also shifts the pair detuning.
    """
    d = detuning + budget
    if d == 0:
        raise RegimeError("zero detuning: resonant coupling has no dispersive limit")

    def shift(k):
        if k < 0:
            return 0.0
        w = sideband_rabi(k, eta, rabi_0)
        return 0.5 * (np.sign(d) * np.hypot(d, w) - d)

    return budget + shift(n) + shift(n - 1)


def check_dispersive(eta, rabi_0: float, detuning, n_max: int = 1):
    eta_arr = np.atleast_1d(np.asarray(eta, dtype=float))
    det = np.broadcast_to(np.atleast_1d(np.asarray(detuning, dtype=float)), eta_arr.shape)
    coupling = np.abs(eta_arr) * abs(rabi_0) * np.sqrt(n_max + 1)
    bad = coupling >= np.abs(det) / 2
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise RegimeError(
            f"not dispersive: eta*Omega0*sqrt(n_max+1) = 2pi x {coupling[k] / 2 / np.pi:.4g} Hz "
            f">= |detuning|/2 = 2pi x {abs(det[k]) / 4 / np.pi:.4g} Hz (n_max={n_max})")


def compensation_solve(eta, rabi_0: float, detuning, delta_other: float = 0.0, n_max: int = 1,
                       residual: float = 0.0) -> ShiftBudget:
    """Compensation shift that nulls the n=0 Ramsey rate.

    The dispersive condition is checked for the ladder up to ``n_max``.
    ``residual`` leaves a deliberate n=0 rate (rad/s) to model imperfect
    compensation; it may not exceed :data:`RESIDUAL_BOUND` in magnitude.
    """
    if abs(residual) > RESIDUAL_BOUND * (1 + 1e-12):
        raise ValueError(f"compensation residual {residual / 2 / np.pi:.1f} Hz exceeds the 300 Hz bound")
    check_dispersive(eta, rabi_0, detuning, n_max)
    comp = -(_kappa(eta, rabi_0, detuning) + delta_other) + residual
    return ShiftBudget(delta_other=delta_other, delta_comp=comp)


# --- operators --------------------------------------------------------------

@functools.lru_cache(maxsize=16)
def _space_ops(space: SpaceSpec):
    """sigma^+ per ion, a per mode, and number-operator diagonals."""
    ion_dims = [2] * space.ion_count
    mode_dims = list(space.mode_dims)
    dims = ion_dims + mode_dims
    sp = np.array([[0, 0], [1, 0]], dtype=complex)  # |D><S|, S=0, D=1

    def embed(op, slot):
        out = np.ones((1, 1), dtype=complex)
        for k, d in enumerate(dims):
            out = np.kron(out, op if k == slot else np.eye(d))
        return out

    sigma_plus = [embed(sp, j) for j in range(space.ion_count)]
    lowers = []
    for k, d in enumerate(mode_dims):
        a = np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)
        lowers.append(embed(a, space.ion_count + k))
    grid = np.indices(space.shape).reshape(len(dims), -1)
    n_d = grid[: space.ion_count].sum(axis=0).astype(float)
    n_modes = grid[space.ion_count:].astype(float)
    return sigma_plus, lowers, n_d, n_modes


def number_diagonals(space: SpaceSpec):
    """(number of D ions, per-mode occupation) as diagonal vectors."""
    _, _, n_d, n_modes = _space_ops(space)
    return n_d, n_modes


def single_ion_modes(eta: float = 0.068, axial_frequency: float = 2 * np.pi * 1.712e6) -> ModeSet:
    return normal_modes(IonCrystal(1, axial_frequency, eta))


def _mode_frequency(modes: ModeSet, mode_id: int, axial_frequency) -> float:
    if axial_frequency is None:
        raise ValueError("multi-mode sideband pulses need the axial frequency")
    return float(modes.frequencies[mode_id]) * axial_frequency


def frame_energies(space: SpaceSpec, modes: ModeSet, pulse: PulseEvent,
                   axial_frequency: float | None = None) -> np.ndarray:
    """Diagonal of the frame generator the pulse Hamiltonian is written in."""
    n_d, n_modes = number_diagonals(space)
    kind = pulse.coupling.kind
    if kind == "static":
        return np.zeros(space.dimension)
    frame = pulse.detuning * n_d
    if kind in ("blue", "red") and len(space.mode_list) > 1:
        nu_ref = _mode_frequency(modes, pulse.coupling.mode, axial_frequency)
        for k, (mode_id, _) in enumerate(space.mode_list):
            nu = _mode_frequency(modes, mode_id, axial_frequency)
            frame = frame + (nu_ref - nu) * n_modes[k]
    return frame


def build_hamiltonian(space: SpaceSpec, modes: ModeSet, pulse: PulseEvent,
                      budget: ShiftBudget = ShiftBudget(), axial_frequency: float | None = None
                      ) -> np.ndarray:
    """Rotating-wave Hamiltonian of one pulse (dense, Hermitian).

    A sideband pulse tuned near mode ``m`` also drives every other mode in
    the space, each with detuning ``detuning + nu_m - nu_k``.  The lumped
    budget shift sits on |S> of every ion while a sideband or static-shift
    pulse is on.
    """
    sigma_plus, lowers, n_d, n_modes = _space_ops(space)
    kind = pulse.coupling.kind
    dim = space.dimension
    h = np.zeros((dim, dim), dtype=complex)
    phase = np.exp(1j * pulse.phase)
    if kind == "carrier":
        for j in range(space.ion_count):
            h += 0.5 * pulse.rabi_0 * phase * sigma_plus[j]
    elif kind in ("blue", "red"):
        space.mode_position(pulse.coupling.mode)
        for k, (mode_id, n_max) in enumerate(space.mode_list):
            if mode_id == pulse.coupling.mode and n_max < 2:
                warnings.warn(f"mode {mode_id} truncated at n_max={n_max}: the sideband ladder "
                              "from |1> leaves the space", TruncationWarning, stacklevel=2)
            ladder = lowers[k].conj().T if kind == "blue" else lowers[k]
            for j in range(space.ion_count):
                g = 0.5 * pulse.rabi_0 * modes.eta[j, mode_id]
                if g != 0:
                    h += g * phase * (sigma_plus[j] @ ladder)
    h = h + h.conj().T
    diag = -frame_energies(space, modes, pulse, axial_frequency)
    if kind in ("blue", "red", "static"):
        diag = diag + budget.total * (space.ion_count - n_d)
    h[np.diag_indices(dim)] += diag
    return h


def dump_operator(space: SpaceSpec, h: np.ndarray, threshold: float = 1e-12) -> str:
    """Sparse (row label, column label, re, im) CSV of an operator."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "col", "re", "im"])
    rows, cols = np.nonzero(np.abs(h) >= threshold)
    for r, c in zip(rows, cols):
        w.writerow([space.label(r), space.label(c), repr(float(h[r, c].real)), repr(float(h[r, c].imag))])
    return buf.getvalue()
