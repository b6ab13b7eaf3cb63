"""Ideal gate matrices, gate-time conditions, and the N-ion entangling sequence.

Gate matrices act on the computational space ordered
(|S,0>, |D,0>, |S,1>, |D,1>), i.e. motional qubit major.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .evolve import Pulse, SequenceSpec, carrier_pulse, DEFAULT_CARRIER_RABI
from .hamiltonian import BlueSideband, PulseEvent, RegimeError, _kappa, dressed_ramsey_rate
from .hilbert import SpaceSpec, StateVector

COMPUTATIONAL_LABELS = ("S,0", "D,0", "S,1", "D,1")
COMPUTATIONAL_STATES = (("S", 0), ("D", 0), ("S", 1), ("D", 1))

# Laser phases reproducing the R1 (+i) and R2 (-i) matrices with the carrier
# convention (W/2) e^{i phase} |D><S| + h.c.
R1_PHASE = np.pi
R2_PHASE = 0.0


def ideal_phase(t_over_t0: float) -> np.ndarray:
    """Conditional phase operation after ``t_over_t0`` gate times."""
    if t_over_t0 < 0:
        raise ValueError("t_over_t0 must be >= 0")
    a = np.pi * t_over_t0 / 2
    return np.diag([1, 1, np.exp(1j * a), np.exp(-1j * a)]).astype(complex)


def ideal_ramsey(sign: int) -> np.ndarray:
    """Resonant pi/2 pulse on the internal qubit, ``sign=+1`` for R1, ``-1`` for R2."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    block = np.array([[1, sign * 1j], [sign * 1j, 1]]) / np.sqrt(2)
    return np.kron(np.eye(2), block).astype(complex)


def composite_gate() -> np.ndarray:
    return np.array([[1, 0, 0, 0],
                     [0, 1, 0, 0],
                     [0, 0, 0, -1],
                     [0, 0, 1, 0]], dtype=complex)


def gate_overlap(u: np.ndarray, v: np.ndarray) -> float:
    """|Tr(U^dag V)| / d, insensitive to a global phase."""
    return float(abs(np.trace(u.conj().T @ v)) / u.shape[0])


def gate_time(eta: float, rabi_0: float, detuning: float) -> float:
    """Duration after which |S,1> and |D,1> pick up phases -+ pi/2.

    Relative to |n=0> each of the two levels moves by k = eta^2 Omega0^2 /
    (4 detuning) per phonon, so t0 = (pi/2) / k.
    """
    k = _kappa(eta, rabi_0, detuning)
    if k == 0:
        raise RegimeError("zero phase rate")
    return float(np.pi / 2 / abs(k))


def gate_time_from_rate(rate: float, convention: str = "per_state") -> float:
    """Gate time from a per-phonon phase rate.

    ``"per_state"``: ``rate`` is the phase rate of each level (t0 = (pi/2)/rate).
    ``"ramsey"``: ``rate`` is the measured S-D Ramsey slope, twice the
    per-state rate in the two-sided shift model (t0 = pi/rate).
    """
    if rate == 0:
        raise RegimeError("zero phase rate")
    if convention == "per_state":
        return float(np.pi / 2 / abs(rate))
    if convention == "ramsey":
        return float(np.pi / abs(rate))
    raise ValueError(f"unknown convention {convention!r}")


def rabi_for_slope(slope: float, eta: float, detuning: float, exact: bool = False,
                   n_values=(0, 1, 2, 3), budget=None) -> float:
    """Carrier Rabi frequency giving Ramsey slope ``slope`` (rad/s per phonon).

    The second-order model has slope = eta^2 Omega0^2 / (2 detuning).  With
    ``exact`` the slope is instead that of a straight-line fit through the
    exact dressed rates at ``n_values``, solved for Omega0 by root bracketing.
    ``budget`` is an optional callable giving the |S> shift (rad/s) for a
    trial Omega0, e.g. the compensation that goes with it.
    """
    guess = float(np.sqrt(2 * abs(slope * detuning)) / eta)
    if not exact:
        return guess
    n = np.asarray(n_values, float)

    def mismatch(rabi):
        b = budget(rabi) if budget is not None else 0.0
        rates = [dressed_ramsey_rate(int(k), eta, rabi, detuning, b) for k in n]
        return np.polyfit(n, rates, 1)[0] - slope

    return float(brentq(mismatch, 0.85 * guess, 1.15 * guess, xtol=1e-9 * guess))


def entangle_time(eta_bus: float, rabi_0: float, detuning: float) -> float:
    """Time at which |SS..S> on the bus mode acquires a phase of -1.

    With frequencies in cycles per second this is detuning / (eta^2 Omega^2);
    in angular units it reads 2 pi detuning / (eta^2 Omega^2).
    """
    return float(2 * np.pi * detuning / (eta_bus**2 * rabi_0**2))


def r2_phase_offset(ion_count: int) -> float:
    """Phase of the closing pi/2 pulse relative to R1: pi for odd N, pi/2 for even N."""
    return np.pi if ion_count % 2 else np.pi / 2


def ghz_sequence(ion_count: int, eta_bus: float, rabi_0: float, detuning: float,
                 phi_time: float | None = None, bus_mode: int = 0, r1_phase: float = R1_PHASE,
                 carrier_rabi: float = DEFAULT_CARRIER_RABI) -> SequenceSpec:
    """R1, dispersive bus-mode pulse, R2' with the parity-dependent phase rule.

    All pulses address the ions uniformly.
    """
    if ion_count < 2:
        raise ValueError("the entangling sequence needs at least two ions")
    if phi_time is None:
        phi_time = entangle_time(eta_bus, rabi_0, detuning)
    return SequenceSpec((
        carrier_pulse(np.pi / 2, r1_phase, carrier_rabi),
        Pulse(PulseEvent(BlueSideband(bus_mode), rabi_0, detuning, 0.0, phi_time)),
        carrier_pulse(np.pi / 2, r1_phase + r2_phase_offset(ion_count), carrier_rabi),
    ))


def gate_sequence(rabi_0: float, detuning: float, phi_time: float, bus_mode: int = 0,
                  carrier_rabi: float = DEFAULT_CARRIER_RABI) -> SequenceSpec:
    """Single-ion R1, Phi(t), R2 sequence."""
    return SequenceSpec((
        carrier_pulse(np.pi / 2, R1_PHASE, carrier_rabi),
        Pulse(PulseEvent(BlueSideband(bus_mode), rabi_0, detuning, 0.0, phi_time)),
        carrier_pulse(np.pi / 2, R2_PHASE, carrier_rabi),
    ))


def computational_indices(space: SpaceSpec) -> list[int]:
    """Indices of |S,0>, |D,0>, |S,1>, |D,1> in a one-ion, one-mode space."""
    if space.ion_count != 1 or len(space.mode_list) != 1:
        raise ValueError("computational embedding needs one ion and one mode")
    return [space.index(s, [n]) for s, n in COMPUTATIONAL_STATES]


def restrict(space: SpaceSpec, unitary: np.ndarray) -> np.ndarray:
    """4x4 block of a full-space unitary on the computational states."""
    idx = computational_indices(space)
    return unitary[np.ix_(idx, idx)]


def ghz_fidelity(state: StateVector, zero_phonons: bool = True) -> tuple[float, float]:
    """Best fidelity with (|S..S> + e^{i phi}|D..D>)/sqrt2 over phi, and that phi."""
    space = state.space
    n = space.ion_count
    ph = [0] * len(space.mode_list)
    a = state.amplitude("S" * n, ph)
    b = state.amplitude("D" * n, ph)
    fid = 0.5 * (abs(a) + abs(b)) ** 2
    return float(fid), float(np.angle(b) - np.angle(a))
