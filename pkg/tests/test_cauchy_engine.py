from __future__ import annotations

import math

import numpy as np
import pytest

from landauwave.cauchy_engine import (
    CauchyProblem,
    ForcingTerm,
    PreconditionError,
    WideMollifierWarning,
    estimate_check,
    norms_to_csv,
    second_derivative_norms,
    solution_norms,
    solution_to_csv,
    solve_classical,
    solve_regularized,
)
from landauwave.coefficients import MollifierSpec, OmegaSchedule, Segment, TimeDistribution
from landauwave.h_fourier import SpectralField, TruncationSpec, sobolev_norm, symbol_weights
from landauwave.mode_solver import IntegratorConfig, ModeODE, closed_form_constant, integrate_mode
from landauwave.spectral_basis import BasisParams

B1 = BasisParams(1.0)
TR = TruncationSpec(2, 3)


def const(v, T=4.0, lb=None):
    return TimeDistribution.constant(v, T, lower_bound=lb)


def single(entries, trunc=TR):
    return SpectralField.from_entries(trunc, B1, entries)


def problem(a=None, q=None, u0=None, u1=None, T=4.0, trunc=TR, variant="CPa", s=0.0, forcing=()):
    a = a or const(1.0, T, 1.0)
    q = q or const(0.0, T)
    u0 = u0 if u0 is not None else single({}, trunc)
    u1 = u1 if u1 is not None else single({}, trunc)
    return CauchyProblem(variant, B1, T, a, q, u0, u1, trunc, s, tuple(forcing))


def random_data(rng, trunc):
    c = np.zeros(trunc.shape, dtype=complex)
    damp = (1.0 + np.arange(trunc.n_max + 1)) ** -1.0
    c[0] = (rng.standard_normal(trunc.shape[1:]) + 1j * rng.standard_normal(trunc.shape[1:])) * damp
    return SpectralField(trunc, B1, c)


def random_trig(rng, base, amp, T):
    trig = tuple((rng.uniform(0, amp / 2), rng.uniform(0.5, 3), rng.uniform(0, 6.3)) for _ in range(2))
    return TimeDistribution.smooth(T, (base,), trig=trig, lower_bound=base - sum(t[0] for t in trig))


# --- validation ---------------------------------------------------------------------


def test_problem_validation():
    with pytest.raises(ValueError):
        problem(a=const(1.0))  # no lower bound
    with pytest.raises(ValueError):
        problem(q=TimeDistribution.smooth(4.0, (0.0,), trig=((1.0, 2.0, 0.0),)))
    with pytest.raises(ValueError):
        problem(variant="CPz")
    with pytest.raises(ValueError):
        problem(u0=single({(1, 0, 0): 1}, TruncationSpec(1, 1)))
    with pytest.raises(ValueError):
        problem(forcing=[ForcingTerm(1, 5, 0, 1.0)])
    with pytest.raises(ValueError):
        problem(a=const(1.0, 3.0, 1.0))


def test_classical_rejects_deltas():
    p = problem(q=TimeDistribution.constant(0.0, 4.0, deltas=((1.0, 1.0),)))
    with pytest.raises(PreconditionError):
        solve_classical(p)


# --- classical solves ------------------------------------------------------------------


def test_ground_mode_oscillation():
    p = problem(u0=single({(1, 0, 0): 1}))
    sol = solve_classical(p, out_times=np.array([0.0, 1.0, math.pi]))
    assert sol.u[-1, 0, 0, 0] == pytest.approx(-1, abs=1e-8)
    assert sol.u[1, 0, 0, 0] == pytest.approx(math.cos(1.0), abs=1e-9)
    mask = np.ones(TR.shape, dtype=bool)
    mask[0, 0, 0] = False
    assert not np.any(sol.u[:, mask])


def test_first_level_sine():
    p = problem(u1=single({(1, 0, 1): 1}))
    t = np.linspace(0, 4, 41)
    sol = solve_classical(p, out_times=t)
    np.testing.assert_allclose(sol.u[:, 0, 0, 1], np.sin(math.sqrt(3) * t) / math.sqrt(3), atol=1e-9)


def test_initial_sample_is_data():
    rng = np.random.default_rng(0)
    u0, u1 = random_data(rng, TR), random_data(rng, TR)
    sol = solve_classical(problem(a=random_trig(rng, 2.0, 1.0, 4.0), u0=u0, u1=u1))
    assert np.array_equal(sol.u[0], u0.coeffs)
    assert np.array_equal(sol.du[0], u1.coeffs)
    assert len(sol.times) == 201


def test_forced_single_mode_matches_oracle():
    f = ForcingTerm(1, 1, 2, 0.8 - 0.3j, 1.3)
    p = problem(a=const(2.0, 4.0, 2.0), q=const(0.5), forcing=[f])
    sol = solve_classical(p)
    nu2 = 5.0
    want = closed_form_constant(2.0, 0.5, nu2, 0, 0, sol.times, forcing=(0.8 - 0.3j, 1.3))
    assert np.max(np.abs(sol.u[:, 0, 1, 2] - want)) <= 1e-7
    # other modes stay at rest
    assert np.count_nonzero(np.abs(sol.u).max(axis=0)) == 1


def test_mode_decoupling():
    rng = np.random.default_rng(1)
    a = random_trig(rng, 2.0, 1.0, 4.0)
    q = random_trig(rng, 1.0, 1.0, 4.0)
    u0, u1 = random_data(rng, TR), random_data(rng, TR)
    sol = solve_classical(problem(a=a, q=q, u0=u0, u1=u1))
    for c, j, n in [(1, 0, 0), (1, 2, 3), (1, 1, 1)]:
        ode = ModeODE(B1.B * (2 * n + 1), a, q, T=4.0)
        ms = integrate_mode(ode, u0.coeffs[0, j, n], u1.coeffs[0, j, n], sol.times)
        assert np.max(np.abs(ms.v - sol.u[:, 0, j, n])) <= 1e-12
        assert np.max(np.abs(ms.dv - sol.du[:, 0, j, n])) <= 1e-12


def test_superposition():
    rng = np.random.default_rng(2)
    a = random_trig(rng, 2.0, 1.0, 4.0)
    u0, u1, w0, w1 = (random_data(rng, TR) for _ in range(4))
    f = ForcingTerm(1, 0, 1, 1.0, 0.4)
    s1 = solve_classical(problem(a=a, u0=u0, u1=u1, forcing=[f]))
    s2 = solve_classical(problem(a=a, u0=w0, u1=w1))
    both = solve_classical(problem(a=a, u0=u0 + w0, u1=u1 + w1, forcing=[f]))
    np.testing.assert_allclose(both.u, s1.u + s2.u, atol=1e-9)
    np.testing.assert_allclose(both.du, s1.du + s2.du, atol=1e-9)


def test_cpa_cpb_agree_without_q():
    rng = np.random.default_rng(3)
    a = random_trig(rng, 2.0, 1.0, 4.0)
    u0 = random_data(rng, TR)
    sa = solve_classical(problem(a=a, u0=u0, variant="CPa"))
    sb = solve_classical(problem(a=a, u0=u0, variant="CPb"))
    assert np.max(np.abs(sa.u - sb.u)) <= 1e-10


def test_component_two_modes_evolve_like_component_one():
    tr = TruncationSpec(1, 2, (1, 2))
    u0 = SpectralField.from_entries(tr, B1, {(1, 1, 2): 1.0, (2, 1, 2): 1.0})
    p = CauchyProblem("CPa", B1, 2.0, const(1.0, 2.0, 1.0), const(0.0, 2.0), u0, SpectralField.zeros(tr, B1), tr)
    sol = solve_classical(p)
    np.testing.assert_array_equal(sol.u[:, 0, 1, 2], sol.u[:, 1, 1, 2])


# --- norms ---------------------------------------------------------------------------


def test_norm_examples():
    sol = solve_classical(problem(u0=single({(1, 0, 0): 1})))
    t, h1, h0 = solution_norms(sol, 0.0)
    np.testing.assert_allclose(h1, np.abs(np.cos(t)), atol=1e-9)
    np.testing.assert_allclose(h0, np.abs(np.sin(t)), atol=1e-9)
    zero = solve_classical(problem())
    _, z1, z0 = solution_norms(zero)
    assert not np.any(z1) and not np.any(z0)


def test_weighted_energy_conserved_for_constant_coefficients():
    rng = np.random.default_rng(4)
    a0, q0 = 2.5, 1.5
    u0, u1 = random_data(rng, TR), random_data(rng, TR)
    sol = solve_classical(problem(a=const(a0, 4.0, a0), q=const(q0), u0=u0, u1=u1))
    w = symbol_weights(TR, B1)
    kappa = a0 * (1 + q0 / w)
    E = np.sum(kappa * w * np.abs(sol.u) ** 2 + np.abs(sol.du) ** 2, axis=(1, 2, 3))
    assert np.max(np.abs(E / E[0] - 1)) <= 1e-6


def test_second_derivative_from_equation():
    rng = np.random.default_rng(5)
    a = random_trig(rng, 2.0, 1.0, 4.0)
    sol = solve_classical(problem(a=a, u0=random_data(rng, TR)))
    h = 1e-4
    t = np.array([0.0, 1.0, 1.0 + h, 1.0 + 2 * h])
    fine = solve_classical(problem(a=a, u0=sol.problem.u0), out_times=t)
    fd = (fine.du[3] - fine.du[1]) / (2 * h)
    ddu = fine.ddu()
    assert np.max(np.abs(ddu[2] - fd)) < 1e-6
    assert second_derivative_norms(sol).shape == sol.times.shape


# --- estimate ----------------------------------------------------------------------------


def test_estimate_constant_coefficients():
    rng = np.random.default_rng(6)
    sol = solve_classical(problem(u0=random_data(rng, TR), u1=random_data(rng, TR)))
    res = estimate_check(sol)
    assert res.passed and res.measured_C <= 1 + 1e-6


def test_estimate_two_plus_sin():
    rng = np.random.default_rng(7)
    tr = TruncationSpec(2, 8)
    a = TimeDistribution.smooth(4.0, (2.0,), trig=((1.0, 1.0, 0.0),), lower_bound=1.0)
    sol = solve_classical(problem(a=a, q=const(1.0), u0=random_data(rng, tr), u1=random_data(rng, tr), trunc=tr))
    res = estimate_check(sol)
    assert res.passed and res.measured_C > 0


def test_estimate_zero_data():
    res = estimate_check(solve_classical(problem()))
    assert res.passed and res.measured_C == 0


def test_estimate_forced():
    f = ForcingTerm(1, 0, 0, 2.0, 0.3)
    a = TimeDistribution.smooth(4.0, (2.0,), trig=((0.5, 1.0, 0.0),), lower_bound=1.5)
    sol = solve_classical(problem(a=a, forcing=[f], u0=single({(1, 0, 1): 0.5})))
    assert estimate_check(sol).passed


@pytest.mark.parametrize("seed", range(4))
def test_estimate_random_suite(seed):
    rng = np.random.default_rng(100 + seed)
    tr = TruncationSpec(1, 8)
    T = 2.0
    a = random_trig(rng, rng.uniform(1.5, 3.0), 1.0, T)
    q = random_trig(rng, rng.uniform(1.0, 2.5), 2.0, T)
    sol = solve_classical(problem(a=a, q=q, u0=random_data(rng, tr), u1=random_data(rng, tr), trunc=tr, T=T))
    assert estimate_check(sol).passed


# --- regularised solves -------------------------------------------------------------------


def test_regularized_approaches_classical():
    T = 2.0
    a = TimeDistribution.smooth(T, (2.0,), trig=((1.0, 1.0, 0.0),), lower_bound=1.0)
    q = TimeDistribution(T, (Segment(0.0, 1.0, (1.0, 1.0)), Segment(1.0, T, (1.0, 1.0))))
    p = problem(a=a, q=q, u0=single({(1, 0, 0): 1.0, (1, 1, 2): 0.5j}), T=T)
    ref = solve_classical(p)
    errs = []
    for eps in (0.1, 0.01, 0.001):
        sol = solve_regularized(p, MollifierSpec(), OmegaSchedule("power", p=1.0), eps)
        errs.append(np.max(np.abs(sol.u - ref.u)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-4


def test_regularized_delta_runs():
    T = 2.0
    q = TimeDistribution.constant(0.0, T, deltas=((1.0, 1.0),))
    p = problem(a=const(1.0, T, 1.0), q=q, u0=single({(1, 0, 0): 1.0}), T=T)
    sol = solve_regularized(p, MollifierSpec(), OmegaSchedule("log"), 2.0**-10)
    _, h1, h0 = solution_norms(sol)
    assert np.all(np.isfinite(h1)) and np.all(np.isfinite(h0))
    assert sol.eps == 2.0**-10 and sol.omega == pytest.approx(1 / math.log(2**10))


def test_regularized_grid_independence():
    T = 2.0
    q = TimeDistribution.constant(0.0, T, deltas=((1.0, 1.0),))
    p = problem(a=const(1.0, T, 1.0), q=q, u0=single({(1, 0, 1): 1.0}), T=T)
    g1 = np.linspace(0, T, 11)
    g2 = np.linspace(0, T, 21)
    s1 = solve_regularized(p, MollifierSpec(), OmegaSchedule("log"), 0.01, out_times=g1)
    s2 = solve_regularized(p, MollifierSpec(), OmegaSchedule("log"), 0.01, out_times=g2)
    assert np.max(np.abs(s1.u - s2.u[::2])) < 1e-8


def test_wide_mollifier_warning():
    T = 2.0
    p = problem(a=const(1.0, T, 1.0), u0=single({(1, 0, 0): 1.0}), T=T)
    with pytest.warns(WideMollifierWarning):
        solve_regularized(p, MollifierSpec(), OmegaSchedule("log"), 0.25)


def test_regularized_delta_forcing_profile():
    T = 2.0
    prof = TimeDistribution.constant(0.0, T, deltas=((1.0, 1.0),))
    f = ForcingTerm(1, 0, 0, 1.0, 0.0, prof)
    p = problem(a=const(1.0, T, 1.0), forcing=[f], T=T)
    with pytest.raises(PreconditionError):
        solve_classical(p)
    sol = solve_regularized(p, MollifierSpec(), OmegaSchedule("power", p=1.0), 1e-3)
    # impulse of unit weight at t = 1: v = sin(t - 1) afterwards
    k = np.searchsorted(sol.times, 1.5)
    assert sol.u[k, 0, 0, 0].real == pytest.approx(math.sin(sol.times[k] - 1.0), abs=1e-3)


# --- export ------------------------------------------------------------------------------


def test_csv_exports():
    sol = solve_classical(problem(u0=single({(1, 0, 0): 1})), out_times=np.linspace(0, 1, 3))
    text = solution_to_csv(sol)
    lines = text.splitlines()
    assert lines[0] == "t,j,n,component,re_u,im_u,re_du,im_du"
    assert len(lines) == 1 + 3 * len(list(TR.indices()))
    norms = norms_to_csv(sol).splitlines()
    assert norms[0] == "t,h_norm_1plus_s,h_norm_s" and len(norms) == 4
    assert norms[1] == "0,1,0"


def test_top_shell_diagnostic():
    sol = solve_classical(problem(u0=single({(1, 0, 3): 1.0, (1, 0, 0): 1.0})), out_times=np.array([0.0, 1.0]))
    assert sol.top_shell_mass == pytest.approx(7 / 8)
    assert sobolev_norm(sol.u_at(0), 1) == pytest.approx(math.sqrt(8))
