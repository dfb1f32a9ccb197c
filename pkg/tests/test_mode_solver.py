from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landauwave.coefficients import MollifierSpec, Segment, TimeDistribution, regularize
from landauwave.mode_solver import (
    EnergyTrace,
    FunctionCoefficient,
    IntegratorConfig,
    ModeODE,
    ModeState,
    ResonanceError,
    Symmetriser,
    assemble_system,
    closed_form_constant,
    energy,
    fundamental_matrix,
    gronwall_bound_check,
    integrate_mode,
    mode_constant,
    mode_estimate_check,
    symmetriser_eval,
)

CFG = IntegratorConfig()


def trig_coefficient(rng, base, T=2.0, terms=2, amp=0.4):
    trig = tuple((rng.uniform(0, amp), rng.uniform(0.5, 4), rng.uniform(0, 2 * math.pi)) for _ in range(terms))
    lb = base - sum(t[0] for t in trig)
    return TimeDistribution.smooth(T, (base,), trig=trig, lower_bound=lb)


# --- algebra -------------------------------------------------------------------


def test_assemble_system_examples():
    A, F = assemble_system(ModeODE(1.0, 1.0, 0.0), 0.3)
    assert np.array_equal(A, [[0, 1], [1, 0]])
    assert np.array_equal(F, [0, 0])
    A, _ = assemble_system(ModeODE(1.0, 2.0, 3.0), 1.7)
    assert np.array_equal(A, [[0, 1], [8, 0]])
    _, F = assemble_system(ModeODE(1.0, 1.0, forcing=lambda t: 2j), 0.0)
    assert F[1] == 2j


def test_cpb_coefficient():
    ode = ModeODE(4.0, 2.0, 3.0, "CPb")
    assert ode.kappa(0.0) == pytest.approx(2.0 + 3.0 / 4.0)
    with pytest.raises(ValueError):
        ModeODE(4.0, 2.0, 3.0, "CPc")
    with pytest.raises(ValueError):
        ModeODE(0.0, 1.0)


def test_symmetriser_examples():
    assert symmetriser_eval(ModeODE(1.0, 1.0, 0.0), 0.0).s11 == 1
    assert symmetriser_eval(ModeODE(3.0, 4.0, 0.0), 0.0).s11 == 4
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, q, nu2, t = rng.uniform(0.1, 5), rng.uniform(0, 5), rng.uniform(0.1, 50), rng.uniform(0, 10)
        ode = ModeODE(nu2, a, q)
        A, _ = assemble_system(ode, t)
        S = symmetriser_eval(ode, t).matrix()
        # with V' = i nu A V, S is a symmetriser iff S A is Hermitian
        assert np.array_equal(S @ A, (S @ A).T)


def test_energy_examples():
    assert energy(ModeState(1j, 0, 0.0, 1.0), Symmetriser(1.0)) == 1
    assert energy(ModeState(0, 0, 0.0, 1.0), Symmetriser(3.0)) == 0
    rng = np.random.default_rng(1)
    for _ in range(50):
        s11 = rng.uniform(0.1, 10)
        V = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        E = energy(ModeState(V[0], V[1], 0.0, 1.0), Symmetriser(s11))
        n2 = np.sum(np.abs(V) ** 2)
        assert min(s11, 1) * n2 * (1 - 1e-14) <= E <= max(s11, 1) * n2 * (1 + 1e-14)


def test_mode_state_round_trip():
    s = ModeState.from_v(0.3 - 0.2j, 1.5j, 0.1, 2.0)
    assert s.v == pytest.approx(0.3 - 0.2j) and s.dv == 1.5j


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(rel_tol=0.5)
    with pytest.raises(ValueError):
        IntegratorConfig(max_step_fraction=0.2)


def test_energy_trace_rejects_negative():
    with pytest.raises(ValueError):
        EnergyTrace([0.0, 1.0], [1.0, -1.0])


# --- integration ------------------------------------------------------------------


def test_integrate_examples():
    sol = integrate_mode(ModeODE(1.0, 1.0, 0.0), 1.0, 0.0, [0.0, math.pi])
    assert sol.v[-1] == pytest.approx(-1.0, abs=1e-8)
    sol = integrate_mode(ModeODE(1.0, 4.0, 0.0), 0.0, 1.0, [0.0, math.pi / 4])
    assert sol.v[-1] == pytest.approx(0.5, abs=1e-8)
    t = np.linspace(0, 3, 31)
    sol = integrate_mode(ModeODE(1.0, 1.0, 3.0), 1.0, 0.0, t)
    np.testing.assert_allclose(sol.v, np.cos(2 * t), atol=1e-8)


def test_closed_form_examples():
    assert closed_form_constant(1, 0, 1, 1, 0, math.pi) == pytest.approx(-1)
    t = np.linspace(0, 5, 11)
    np.testing.assert_allclose(closed_form_constant(2, 2, 2, 1, 0, t), np.cos(math.sqrt(8) * t), atol=1e-14)
    # mu = 2 (a0 = 1, q0 = 0, nu2 = 4), sigma = 1, F0 = 3
    assert closed_form_constant(1, 0, 4, 0, 0, 0.0, forcing=(3.0, 1.0)) == pytest.approx(0, abs=1e-15)
    assert closed_form_constant(1, 0, 4, 0, 0, 0.0, forcing=(3.0, 1.0), derivative=True) == pytest.approx(0, abs=1e-15)
    with pytest.raises(ResonanceError):
        closed_form_constant(1, 0, 4, 0, 0, 1.0, forcing=(3.0, 2.0))


@settings(max_examples=15, deadline=None)
@given(a0=st.floats(1, 5), q0=st.floats(0, 5), nu2=st.integers(1, 41), v0=st.complex_numbers(max_magnitude=3),
       v1=st.complex_numbers(max_magnitude=3), variant=st.sampled_from(["CPa", "CPb"]))
def test_constant_coefficient_oracle(a0, q0, nu2, v0, v1, variant):
    if abs(v0) + abs(v1) < 1e-3:
        v0 = 1.0
    t = np.linspace(0, 10, 101)
    ode = ModeODE(float(nu2), a0, q0, variant)
    sol = integrate_mode(ode, v0, v1, t)
    want = closed_form_constant(a0, q0, nu2, v0, v1, t, variant=variant)
    dwant = closed_form_constant(a0, q0, nu2, v0, v1, t, variant=variant, derivative=True)
    assert np.max(np.abs(sol.v - want)) <= 1e-8 * np.max(np.abs(want))
    assert np.max(np.abs(sol.dv - dwant)) <= 1e-8 * np.max(np.abs(dwant))
    E = sol.trace.energies
    assert np.max(np.abs(E / E[0] - 1)) <= 1e-8


def test_high_frequency_constant_oracle():
    t = np.linspace(0, 10, 201)
    ode = ModeODE(400.0, 1.0, 0.0)
    sol = integrate_mode(ode, 1.0, 0.5, t)
    want = closed_form_constant(1.0, 0.0, 400.0, 1.0, 0.5, t)
    assert np.max(np.abs(sol.v - want)) <= 1e-8 * np.max(np.abs(want))


def test_forced_oracle():
    t = np.linspace(0, 10, 101)
    ode = ModeODE(3.0, 2.0, 0.5, forcing=lambda s: 1.5 * complex(math.cos(0.7 * s), math.sin(0.7 * s)))
    sol = integrate_mode(ode, 0.2, -0.1j, t)
    want = closed_form_constant(2.0, 0.5, 3.0, 0.2, -0.1j, t, forcing=(1.5, 0.7))
    assert np.max(np.abs(sol.v - want)) <= 1e-7


def test_time_reversibility():
    rng = np.random.default_rng(3)
    a = trig_coefficient(rng, 2.0)
    q = trig_coefficient(rng, 1.0)
    ode = ModeODE(5.0, a, q)
    fwd = integrate_mode(ode, 1.0 + 0.5j, -0.3, [0.0, 2.0])
    back = integrate_mode(ode, fwd.v[-1], fwd.dv[-1], [2.0, 0.0], t0=2.0)
    assert abs(back.v[-1] - (1.0 + 0.5j)) < 1e-6
    assert abs(back.dv[-1] + 0.3) < 1e-6


def test_linearity_in_data_and_forcing():
    rng = np.random.default_rng(4)
    a = trig_coefficient(rng, 2.0)
    t = np.linspace(0, 2, 21)
    f = lambda s: complex(math.sin(3 * s), s)  # noqa: E731
    s1 = integrate_mode(ModeODE(3.0, a, forcing=f), 1.0, 0.0, t)
    s2 = integrate_mode(ModeODE(3.0, a), 0.0, 2j, t)
    both = integrate_mode(ModeODE(3.0, a, forcing=lambda s: 2 * f(s)), 2.0, 2j, t)
    np.testing.assert_allclose(both.v, 2 * s1.v + s2.v, atol=1e-8)
    np.testing.assert_allclose(both.dv, 2 * s1.dv + s2.dv, atol=1e-8)


def test_breakpoint_restart_matches_piecewise_closed_form():
    a = TimeDistribution.step(1.0, 4.0, 1.0, 2.0, lower_bound=1.0)
    ode = ModeODE(1.0, a, 0.0)
    sol = integrate_mode(ode, 1.0, 0.0, [0.0, 1.0, 2.0])
    v1, d1 = math.cos(1.0), -math.sin(1.0)
    want = v1 * math.cos(2.0) + d1 * math.sin(2.0) / 2.0
    assert sol.v[-1] == pytest.approx(want, abs=1e-9)
    assert ode.breakpoints == (1.0,)
    assert ode.kappa_jumps() == [(1.0, 1.0, 4.0)]


def test_fundamental_matrix_verify_option():
    phi = fundamental_matrix(ModeODE(2.0, 1.5), np.linspace(0, 2, 5), IntegratorConfig(verify=True))
    assert phi.shape == (5, 2, 2)
    # Wronskian of v'' + k v = 0 is constant
    np.testing.assert_allclose(np.linalg.det(phi), 1.0, atol=1e-9)


def test_output_times_outside_interval_rejected():
    with pytest.raises(ValueError):
        integrate_mode(ModeODE(1.0, 1.0, T=1.0), 1.0, 0.0, [0.0, 0.5, -0.5, 1.0])


# --- Gronwall -----------------------------------------------------------------------


def test_gronwall_constant_coefficients():
    t = np.linspace(0, 5, 51)
    ode = ModeODE(2.0, 3.0, 1.0)
    sol = integrate_mode(ode, 1.0, 1.0, t)
    E = sol.trace.energies
    assert np.max(np.abs(E / E[0] - 1)) <= 1e-8
    assert gronwall_bound_check(sol.trace, ode)


def test_gronwall_two_plus_sin():
    a = TimeDistribution.smooth(2.0, (2.0,), trig=((1.0, 1.0, 0.0),), lower_bound=1.0)
    ode = ModeODE(3.0, a, 0.0)
    sol = integrate_mode(ode, 1.0, 0.5, np.linspace(0, 2, 101), IntegratorConfig(1e-12, 1e-14))
    assert gronwall_bound_check(sol.trace, ode)


def test_gronwall_rejects_adversarial_trace():
    ode = ModeODE(1.0, 1.0, 0.0)
    t = np.linspace(0, 2, 21)
    E = np.ones_like(t)
    E[10:] = 2.0
    assert not gronwall_bound_check(EnergyTrace(t, E), ode)
    with pytest.raises(ValueError):
        gronwall_bound_check(EnergyTrace([], []), ode)


@pytest.mark.parametrize("seed", range(6))
def test_gronwall_random_trig_coefficients(seed):
    rng = np.random.default_rng(seed)
    a = trig_coefficient(rng, rng.uniform(1.5, 3))
    q = trig_coefficient(rng, 1.0, amp=0.3)
    for variant in ("CPa", "CPb"):
        ode = ModeODE(float(rng.integers(1, 20)), a, q, variant)
        sol = integrate_mode(ode, rng.standard_normal(), 1j * rng.standard_normal(), np.linspace(0, 2, 101))
        assert gronwall_bound_check(sol.trace, ode)


def test_gronwall_with_jump():
    a = TimeDistribution.step(1.0, 3.0, 1.0, 2.0, lower_bound=1.0)
    ode = ModeODE(1.0, a, 0.0)
    sol = integrate_mode(ode, 1.0, 0.0, np.linspace(0, 2, 41))
    assert gronwall_bound_check(sol.trace, ode)


def test_gronwall_regularized_delta():
    q = TimeDistribution.constant(0.0, 2.0, deltas=((1.0, 1.0),))
    ode = ModeODE(1.0, 1.0, regularize(q, MollifierSpec(), 0.1))
    sol = integrate_mode(ode, 1.0, 0.0, np.linspace(0, 2, 201))
    assert gronwall_bound_check(sol.trace, ode)


def test_gronwall_forced():
    a = TimeDistribution.smooth(2.0, (2.0,), trig=((0.5, 2.0, 0.0),), lower_bound=1.0)
    ode = ModeODE(2.0, a, 0.0, forcing=lambda s: complex(math.cos(s), 0.3))
    sol = integrate_mode(ode, 0.5, 0.0, np.linspace(0, 2, 101))
    assert gronwall_bound_check(sol.trace, ode)


# --- per-mode estimate -----------------------------------------------------------------


def test_mode_estimate_constant():
    ode = ModeODE(2.0, 3.0, 0.0)
    sol = integrate_mode(ode, 1.0, 0.2, np.linspace(0, 4, 81))
    res = mode_estimate_check(ode, 1.0, 0.2, sol)
    assert res.passed
    assert res.measured <= max(3.0, 1) / min(3.0, 1) * (1 + 1e-8)


def test_mode_estimate_zero_data():
    ode = ModeODE(2.0, 3.0, 0.0)
    sol = integrate_mode(ode, 0.0, 0.0, np.linspace(0, 1, 11))
    assert mode_estimate_check(ode, 0.0, 0.0, sol).passed


def test_mode_estimate_two_plus_sin():
    a = TimeDistribution.smooth(2.0, (2.0,), trig=((1.0, 1.0, 0.0),), lower_bound=1.0)
    ode = ModeODE(5.0, a, 1.0)
    sol = integrate_mode(ode, 0.7, -0.4, np.linspace(0, 2, 101))
    res = mode_estimate_check(ode, 0.7, -0.4, sol)
    assert res.passed and res.bound == pytest.approx(mode_constant(ode, sol.times))


def test_function_coefficient_adapter():
    a = FunctionCoefficient(lambda t: 2 + math.sin(t) if np.ndim(t) == 0 else 2 + np.sin(t), np.cos)
    direct = TimeDistribution(2.0, (Segment(0.0, 2.0, (2.0,), ((1.0, 1.0, 0.0),)),))
    t = np.linspace(0, 2, 11)
    s1 = integrate_mode(ModeODE(3.0, a, T=2.0), 1.0, 0.0, t)
    s2 = integrate_mode(ModeODE(3.0, direct), 1.0, 0.0, t)
    np.testing.assert_allclose(s1.v, s2.v, atol=1e-10)
