"""Axial equilibrium and normal modes of a linear ion crystal.

Lengths are in the usual scaled unit l = (q^2 / (4 pi eps0 m w_z^2))^(1/3),
so the potential of N ions on the trap axis reads

    U(u) = sum_i u_i^2 / 2 + sum_{i<j} 1 / |u_i - u_j|

and frequencies come out in units of the axial (center-of-mass) frequency.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_NEWTON_ITER = 200
GRADIENT_TOL = 1e-10


class ConvergenceError(RuntimeError):
    """Raised when the equilibrium root solve does not converge."""


@dataclass(frozen=True)
class IonCrystal:
    ion_count: int
    axial_frequency: float  # rad/s
    eta_single: float

    def __post_init__(self):
        if int(self.ion_count) != self.ion_count or self.ion_count < 1:
            raise ValueError(f"ion_count must be a positive integer, got {self.ion_count}")
        if not self.axial_frequency > 0:
            raise ValueError("axial_frequency must be positive")
        if not 0 < self.eta_single < 1:
            raise ValueError(f"eta_single={self.eta_single} outside the Lamb-Dicke range (0, 1)")


@dataclass(frozen=True)
class ModeSet:
    """Axial normal modes.

    ``frequencies[m]`` is in units of the axial frequency, ascending.
    Row ``m`` of ``eigenvectors`` is the displacement pattern of mode ``m``;
    ``eta[j, m]`` the Lamb-Dicke factor of ion ``j`` on mode ``m``.
    """

    frequencies: np.ndarray
    eigenvectors: np.ndarray
    eta: np.ndarray
    positions: np.ndarray = field(default=None, repr=False)
    axial: bool = True

    @property
    def mode_count(self) -> int:
        return len(self.frequencies)


def _gradient(u):
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    return u - np.sum(np.sign(d) / d**2, axis=1)


def _hessian(u):
    d = np.abs(u[:, None] - u[None, :])
    np.fill_diagonal(d, np.inf)
    inv3 = 2.0 / d**3
    h = -inv3
    np.fill_diagonal(h, 1.0 + inv3.sum(axis=1))
    return h


def equilibrium_positions(ion_count: int) -> np.ndarray:
    """Scaled equilibrium positions of ``ion_count`` ions, sorted ascending.

    Damped Newton iteration started from the asymptotic spacing law
    ``~2.018 N^-0.559``; the step is halved whenever the residual grows.
    """
    if int(ion_count) != ion_count or ion_count < 1:
        raise ValueError(f"ion_count must be a positive integer, got {ion_count}")
    n = int(ion_count)
    if n == 1:
        return np.zeros(1)
    spacing = 2.018 * n ** (-0.559)
    u = (np.arange(n) - (n - 1) / 2) * spacing
    g = _gradient(u)
    res = np.max(np.abs(g))
    for _ in range(MAX_NEWTON_ITER):
        if res <= GRADIENT_TOL:
            break
        step = np.linalg.solve(_hessian(u), g)
        scale = 1.0
        while True:
            trial = u - scale * step
            # keep the ordering; a crossing means the step overshot
            if np.all(np.diff(trial) > 0):
                g_trial = _gradient(trial)
                res_trial = np.max(np.abs(g_trial))
                if res_trial < res or scale < 1e-6:
                    break
            scale *= 0.5
            if scale < 1e-12:
                raise ConvergenceError(f"line search stalled at residual {res:.3e}")
        u, g, res = trial, g_trial, res_trial
    else:
        if res > GRADIENT_TOL:
            raise ConvergenceError(
                f"equilibrium solve did not converge in {MAX_NEWTON_ITER} iterations "
                f"(gradient max-norm {res:.3e})")
    # enforce the mirror symmetry the exact solution has
    u = 0.5 * (u - u[::-1])
    return u


def normal_modes(crystal: IonCrystal) -> ModeSet:
    """Axial normal modes of ``crystal`` with per-ion Lamb-Dicke factors."""
    u = equilibrium_positions(crystal.ion_count)
    n = crystal.ion_count
    evals, evecs = np.linalg.eigh(_hessian(u))
    order = np.argsort(evals)
    evals, evecs = evals[order], evecs[:, order]
    freqs = np.sqrt(evals)
    vecs = evecs.T.copy()
    # The COM mode is an exact eigenvector with eigenvalue 1; pin it so
    # round-off does not leak into the invariants callers rely on.
    freqs[0] = 1.0
    vecs[0] = 1.0 / np.sqrt(n)
    for m in range(1, n):
        v = vecs[m] - vecs[:m].T @ (vecs[:m] @ vecs[m])
        v /= np.linalg.norm(v)
        # sign convention: first nonzero component positive
        k = np.flatnonzero(np.abs(v) > 1e-9)[0]
        vecs[m] = v if v[k] > 0 else -v
    partial = ModeSet(frequencies=freqs, eigenvectors=vecs, eta=np.zeros((n, n)), positions=u)
    return ModeSet(frequencies=freqs, eigenvectors=vecs,
                   eta=lamb_dicke_factors(crystal, partial), positions=u)


def lamb_dicke_factors(crystal: IonCrystal, modes: ModeSet) -> np.ndarray:
    """``eta[j, m] = eta_single * b[m, j] / sqrt(freq[m])``."""
    return crystal.eta_single * modes.eigenvectors.T / np.sqrt(modes.frequencies)[None, :]


def spectator_modes(modes: ModeSet, count: int = 2) -> list[int]:
    """Indices of the ``count`` modes closest in frequency above the COM bus mode."""
    return list(range(1, min(1 + count, modes.mode_count)))
