import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iontrap.hamiltonian import (CARRIER, RESIDUAL_BOUND, STATIC_SHIFT, BlueSideband, Coupling, PulseEvent,
                                 RedSideband, RegimeError, ShiftBudget, TruncationWarning, build_hamiltonian,
                                 check_dispersive, compensation_solve, dispersive_shift, dressed_ramsey_rate,
                                 dump_operator, frame_energies, ramsey_phase_rate, sideband_rabi,
                                 single_ion_modes)
from iontrap.hilbert import SpaceSpec
from iontrap.modes import IonCrystal, normal_modes

TWO_PI = 2 * np.pi
ETA = 0.068
DELTA = TWO_PI * 60e3


def test_sideband_rabi_examples():
    assert sideband_rabi(0, ETA, TWO_PI * 175.0e3) == pytest.approx(TWO_PI * 11.9e3, rel=1e-12)
    assert sideband_rabi(1, ETA, 1.0) / sideband_rabi(0, ETA, 1.0) == pytest.approx(np.sqrt(2))
    assert sideband_rabi(3, ETA, 5.0) == pytest.approx(2 * ETA * 5.0)
    with pytest.raises(ValueError):
        sideband_rabi(-1, ETA, 1.0)


def test_dispersive_shift_examples():
    rabi_0 = TWO_PI * 12e3 / ETA
    assert dispersive_shift(0, ETA, rabi_0, DELTA) == pytest.approx(TWO_PI * 0.6e3, rel=1e-12)
    assert dispersive_shift(0, ETA, rabi_0, 10 * DELTA) == pytest.approx(TWO_PI * 0.06e3, rel=1e-12)
    shifts = [dispersive_shift(n, ETA, rabi_0, DELTA) for n in range(4)]
    np.testing.assert_allclose(np.array(shifts) / shifts[0], [1, 2, 3, 4])
    with pytest.raises(RegimeError):
        dispersive_shift(0, ETA, rabi_0, 0.0)


def test_ramsey_rate_compensated():
    rabi_0 = TWO_PI * 265e3
    budget = compensation_solve(ETA, rabi_0, DELTA)
    assert abs(ramsey_phase_rate(0, ETA, rabi_0, DELTA, budget)) <= RESIDUAL_BOUND
    r1 = ramsey_phase_rate(1, ETA, rabi_0, DELTA, budget)
    assert ramsey_phase_rate(2, ETA, rabi_0, DELTA, budget) == pytest.approx(2 * r1, rel=1e-12)
    # compensation is n-independent: rate(1) moves by exactly the subtraction
    assert r1 == pytest.approx(ramsey_phase_rate(1, ETA, rabi_0, DELTA) + budget.total, rel=1e-12)


def test_ramsey_rate_exactly_linear():
    rates = [ramsey_phase_rate(n, ETA, TWO_PI * 200e3, DELTA) for n in range(4)]
    quad = np.polyfit(range(4), np.array(rates) - rates[0], 2)[0]
    assert abs(quad) <= 1e-9 * abs(rates[1])


def test_compensation_with_large_other_shift():
    budget = compensation_solve(ETA, TWO_PI * 200e3, DELTA, delta_other=TWO_PI * 100e3)
    assert abs(ramsey_phase_rate(0, ETA, TWO_PI * 200e3, DELTA, budget)) <= RESIDUAL_BOUND
    assert budget.delta_other == TWO_PI * 100e3


def test_compensation_without_other_shift_cancels_sideband_only():
    rabi_0 = TWO_PI * 200e3
    budget = compensation_solve(ETA, rabi_0, DELTA)
    assert budget.delta_comp == pytest.approx(-dispersive_shift(0, ETA, rabi_0, DELTA), rel=1e-12)


def test_compensation_idempotent():
    rabi_0 = TWO_PI * 200e3
    first = compensation_solve(ETA, rabi_0, DELTA, delta_other=TWO_PI * 3e3)
    again = compensation_solve(ETA, rabi_0, DELTA, delta_other=first.delta_other)
    assert again.delta_comp == pytest.approx(first.delta_comp, rel=1e-12)


def test_compensation_residual_bound():
    rabi_0 = TWO_PI * 200e3
    b = compensation_solve(ETA, rabi_0, DELTA, residual=RESIDUAL_BOUND)
    assert ramsey_phase_rate(0, ETA, rabi_0, DELTA, b) == pytest.approx(RESIDUAL_BOUND)
    with pytest.raises(ValueError):
        compensation_solve(ETA, rabi_0, DELTA, residual=1.01 * RESIDUAL_BOUND)


def test_compensation_rejects_non_dispersive():
    with pytest.raises(RegimeError, match="not dispersive"):
        compensation_solve(ETA, TWO_PI * 600e3, DELTA)
    with pytest.raises(RegimeError):
        check_dispersive(ETA, TWO_PI * 250e3, DELTA, n_max=3)
    check_dispersive(ETA, TWO_PI * 250e3, DELTA, n_max=1)


def _single(n_max=3):
    return SpaceSpec(1, ((0, n_max),)), single_ion_modes(ETA)


def test_carrier_block():
    space, ms = _single()
    h = build_hamiltonian(space, ms, PulseEvent(CARRIER, 2.0, 0.0, 0.0))
    for n in range(4):
        s, d = space.index("S", [n]), space.index("D", [n])
        assert h[d, s] == pytest.approx(1.0)
        assert h[s, d] == pytest.approx(1.0)
    off = h.copy()
    off[np.diag_indices(space.dimension)] = 0
    assert np.count_nonzero(np.abs(off) > 0) == 8


def test_blue_sideband_sqrt_ladder():
    space, ms = _single()
    h = build_hamiltonian(space, ms, PulseEvent(BlueSideband(0), 1.0, 0.0, 0.3))
    e01 = h[space.index("D", [1]), space.index("S", [0])]
    e12 = h[space.index("D", [2]), space.index("S", [1])]
    assert e12 == pytest.approx(np.sqrt(2) * e01, rel=1e-14)
    assert np.angle(e01) == pytest.approx(0.3)
    assert abs(e01) == pytest.approx(0.5 * ETA)


def test_red_sideband_lowers():
    space, ms = _single()
    h = build_hamiltonian(space, ms, PulseEvent(RedSideband(0), 1.0, 0.0, 0.0))
    assert abs(h[space.index("D", [0]), space.index("S", [1])]) == pytest.approx(0.5 * ETA)
    assert h[space.index("D", [1]), space.index("S", [0])] == 0


def test_two_ions_couple_symmetrically():
    ms = normal_modes(IonCrystal(2, TWO_PI * 1.712e6, ETA))
    space = SpaceSpec(2, ((0, 2),))
    h = build_hamiltonian(space, ms, PulseEvent(BlueSideband(0), 1.0, DELTA, 0.0))
    dd1 = space.index("DD", [1])
    a = h[dd1, space.index("SD", [0])]
    b = h[dd1, space.index("DS", [0])]
    assert abs(a) == pytest.approx(abs(b)) and abs(a) > 0


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["carrier", "blue", "red", "static"]), st.floats(0, 2 * np.pi),
       st.floats(-1e5, 1e5), st.integers(1, 3))
def test_hermitian(kind, phase, detuning, ions):
    ms = normal_modes(IonCrystal(ions, TWO_PI * 1e6, ETA))
    modes = tuple((m, 2) for m in range(min(ions, 2)))
    space = SpaceSpec(ions, modes)
    coupling = Coupling(kind, 0 if kind in ("blue", "red") else None)
    h = build_hamiltonian(space, ms, PulseEvent(coupling, 1e5, detuning, phase),
                          ShiftBudget(10.0, -3.0), TWO_PI * 1e6)
    assert np.max(np.abs(h - h.conj().T)) <= 1e-14


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2), st.floats(1e3, 1e6), st.floats(1e3, 1e6))
def test_dressed_pair_eigenvalues(n, rabi_0, delta):
    space, ms = _single()
    h = build_hamiltonian(space, ms, PulseEvent(BlueSideband(0), rabi_0, delta, 0.0))
    idx = [space.index("S", [n]), space.index("D", [n + 1])]
    ev = np.linalg.eigvalsh(h[np.ix_(idx, idx)])
    w = sideband_rabi(n, ETA, rabi_0)
    half = 0.5 * np.hypot(w, delta)
    np.testing.assert_allclose(ev, [-delta / 2 - half, -delta / 2 + half], rtol=1e-9, atol=1e-9 * delta)
    # second order: the upper (|S,n>-like) level shifts by the dispersive shift
    shift = ev[1] - 0.0
    assert shift == pytest.approx(dispersive_shift(n, ETA, rabi_0, delta), abs=w**4 / delta**3)


def test_dressed_rate_tends_to_second_order():
    rabi_0 = TWO_PI * 20e3
    small = (ETA * rabi_0 / DELTA) ** 2
    for n in range(4):
        assert dressed_ramsey_rate(n, ETA, rabi_0, DELTA) == pytest.approx(
            ramsey_phase_rate(n, ETA, rabi_0, DELTA), rel=2 * (n + 1) * small)


def test_dressed_rate_needs_detuning():
    with pytest.raises(RegimeError):
        dressed_ramsey_rate(0, ETA, 1.0, 0.0)


def test_budget_sits_on_s_during_sideband_only():
    space, ms = _single(1)
    budget = ShiftBudget(5.0, 2.0)
    with pytest.warns(TruncationWarning):
        h_b = build_hamiltonian(space, ms, PulseEvent(BlueSideband(0), 0.0, 0.0), budget)
    h_c = build_hamiltonian(space, ms, PulseEvent(CARRIER, 0.0, 0.0), budget)
    h_s = build_hamiltonian(space, ms, PulseEvent(STATIC_SHIFT, 0.0), budget)
    s0 = space.index("S", [0])
    assert h_b[s0, s0] == 7.0 and h_s[s0, s0] == 7.0 and h_c[s0, s0] == 0.0
    assert h_b[space.index("D", [0]), space.index("D", [0])] == 0.0


def test_frame_energies_carry_detuning_and_spectators():
    ms = normal_modes(IonCrystal(3, TWO_PI * 1e6, ETA))
    space = SpaceSpec(3, ((0, 1), (1, 1)))
    f = frame_energies(space, ms, PulseEvent(BlueSideband(0), 1.0, 7.0), TWO_PI * 1e6)
    assert f[space.index("DSS", [0, 0])] == 7.0
    assert f[space.index("SSS", [0, 1])] == pytest.approx(TWO_PI * 1e6 * (1 - np.sqrt(3)))
    with pytest.raises(ValueError):
        frame_energies(space, ms, PulseEvent(BlueSideband(0), 1.0, 7.0), None)


def test_truncation_warning():
    space, ms = _single(1)
    with pytest.warns(TruncationWarning):
        build_hamiltonian(space, ms, PulseEvent(BlueSideband(0), 1.0, 1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_hamiltonian(SpaceSpec(1, ((0, 2),)), ms, PulseEvent(BlueSideband(0), 1.0, 1.0))


def test_missing_mode_rejected():
    space, ms = _single()
    with pytest.raises(KeyError):
        build_hamiltonian(space, ms, PulseEvent(BlueSideband(4), 1.0, 1.0))


def test_pulse_and_coupling_validation():
    with pytest.raises(ValueError):
        PulseEvent(CARRIER, 1.0, duration=-1.0)
    with pytest.raises(ValueError):
        Coupling("blue")
    with pytest.raises(ValueError):
        Coupling("magic")


def test_operator_dump():
    space, ms = _single(1)
    text = dump_operator(space, build_hamiltonian(space, ms, PulseEvent(CARRIER, 2.0)))
    lines = text.strip().splitlines()
    assert lines[0].split(",")[:2] == ["row", "col"]
    assert len(lines) == 1 + 4
