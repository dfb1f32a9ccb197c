"""Cauchy problems for the Landau-Hamiltonian wave equation in coefficient space.

    u'' + a(t) [H + q(t)] u = f        (CPa)
    u'' + a(t) H u + q(t) u = f        (CPb)

Every diagonal H-Fourier coefficient obeys an independent scalar equation
whose only mode dependence is nu^2 = B(1 + 2n). One fundamental matrix is
integrated per Landau level n and shared by all (component, j) at that level.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
import numpy as np

from .coefficients import MollifierSpec, OmegaSchedule, TimeDistribution, omega, regularize
from .h_fourier import SpectralField, TruncationSpec, sobolev_norm, symbol_weights
from .mode_solver import (
    EnergyTrace,
    IntegrationError,
    IntegratorConfig,
    ModeODE,
    combine,
    fundamental_matrix,
    growth_integral,
    particular_solution,
)
from .spectral_basis import BasisParams

DEFAULT_OUTPUT_POINTS = 201


class PreconditionError(ValueError):
    pass


class SolveError(RuntimeError):
    def __init__(self, failures):
        self.failures = failures
        lines = "; ".join(f"mode {k}: {v}" for k, v in failures.items())
        super().__init__(f"{len(failures)} mode solve(s) failed: {lines}")


class WideMollifierWarning(UserWarning):
    pass


class _ForcingFunction:
    """t -> amplitude exp(i frequency t) profile(t), carrying the profile's restart points."""

    def __init__(self, amp: complex, freq: float, profile=None):
        self.amp, self.freq = amp, freq
        if profile is None:
            self.shape = None
        elif isinstance(profile, TimeDistribution):
            self.shape = profile.smooth_value
        else:
            self.shape = profile.value
        self.breakpoints = tuple(getattr(profile, "breakpoints", ()))

    def __call__(self, t) -> complex:
        val = self.amp * complex(math.cos(self.freq * t), math.sin(self.freq * t))
        return val if self.shape is None else val * float(self.shape(t))


@dataclass(frozen=True)
class ForcingTerm:
    """f(t) = amplitude * exp(i frequency t) * profile(t) on one diagonal entry."""

    component: int
    j: int
    n: int
    amplitude: complex
    frequency: float = 0.0
    profile: TimeDistribution | None = None

    def time_function(self, profile=None) -> _ForcingFunction:
        prof = profile if profile is not None else self.profile
        return _ForcingFunction(complex(self.amplitude), float(self.frequency), prof)

    def to_dict(self):
        d = {"j": self.j, "n": self.n, "component": self.component,
             "amplitude_re": complex(self.amplitude).real, "amplitude_im": complex(self.amplitude).imag,
             "frequency": self.frequency}
        if self.profile is not None:
            d["profile"] = self.profile.to_dict()
        return d


@dataclass(frozen=True, eq=False)
class CauchyProblem:
    variant: str
    params: BasisParams
    T: float
    a: TimeDistribution
    q: TimeDistribution
    u0: SpectralField
    u1: SpectralField
    trunc: TruncationSpec
    s: float = 0.0
    forcing: tuple[ForcingTerm, ...] = ()

    def __post_init__(self):
        if self.variant not in ("CPa", "CPb"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if self.a.lower_bound is None or not self.a.lower_bound > 0:
            raise ValueError("coefficient a must carry a positive lower bound a0")
        if not self.q.is_nonnegative():
            raise ValueError("coefficient q must be nonnegative")
        for name in ("a", "q"):
            if getattr(self, name).T != self.T:
                raise ValueError(f"coefficient {name} is defined on a different horizon")
        for name in ("u0", "u1"):
            f = getattr(self, name)
            if f.trunc != self.trunc or f.params != self.params:
                raise ValueError(f"{name} does not match the problem truncation/params")
            if not np.all(np.isfinite(f.coeffs)):
                raise ValueError(f"{name} has non-finite coefficients")
        object.__setattr__(self, "forcing", tuple(self.forcing))
        for term in self.forcing:
            if not self.trunc.contains(term.component, term.j, term.n):
                raise ValueError(f"forcing on ({term.component}, {term.j}, {term.n}) is outside the truncation")

    @property
    def has_deltas(self) -> bool:
        return self.a.has_deltas or self.q.has_deltas or any(
            f.profile is not None and f.profile.has_deltas for f in self.forcing)

    def default_times(self):
        return np.linspace(0.0, self.T, DEFAULT_OUTPUT_POINTS)

    def forcing_field(self, t) -> SpectralField:
        entries = [((f.component, f.j, f.n), f.time_function()(t)) for f in self.forcing]
        return SpectralField.from_entries(self.trunc, self.params, entries)

    def forcing_sup_hs(self, times, s=None) -> float:
        """Grid supremum of ||f(t)||_{H^s}^2."""
        s = self.s if s is None else s
        if not self.forcing:
            return 0.0
        return max(sobolev_norm(self.forcing_field(t), s) ** 2 for t in times)


@dataclass(frozen=True, eq=False)
class Solution:
    times: np.ndarray
    u: np.ndarray   # (n_times, 2, j_max + 1, n_max + 1)
    du: np.ndarray
    traces: dict
    problem: CauchyProblem
    odes: dict      # n -> ModeODE used for the level
    eps: float | None = None
    omega: float | None = None
    nfev: int = 0
    top_shell_mass: float = 0.0
    forcing_functions: tuple = ()

    def u_at(self, k: int) -> SpectralField:
        return SpectralField(self.problem.trunc, self.problem.params, self.u[k])

    def du_at(self, k: int) -> SpectralField:
        return SpectralField(self.problem.trunc, self.problem.params, self.du[k])

    def ddu(self) -> np.ndarray:
        """u'' from the equation: -nu^2 kappa(t) u + f, for every output time."""
        p = self.problem
        nu2 = symbol_weights(p.trunc, p.params)[0, 0]
        out = np.empty_like(self.u)
        for n, ode in self.odes.items():
            kap = np.asarray(ode.kappa(self.times), dtype=float)
            out[:, :, :, n] = -(nu2[n] * kap)[:, None, None] * self.u[:, :, :, n]
        for term, fun in zip(p.forcing, self.forcing_functions):
            vals = np.array([fun(t) for t in self.times])
            out[:, term.component - 1, term.j, term.n] += vals
        return out


# --- solving -------------------------------------------------------------------------


def _top_shell_fraction(p: CauchyProblem):
    """Share of the data energy sitting on the highest retained level."""
    w = symbol_weights(p.trunc, p.params)
    total = np.sum(w ** (1 + p.s) * np.abs(p.u0.coeffs) ** 2) + np.sum(w ** p.s * np.abs(p.u1.coeffs) ** 2)
    top = np.sum(w[..., -1] ** (1 + p.s) * np.abs(p.u0.coeffs[..., -1]) ** 2) + \
        np.sum(w[..., -1] ** p.s * np.abs(p.u1.coeffs[..., -1]) ** 2)
    return float(top / total) if total > 0 else 0.0


def _solve(p: CauchyProblem, a_coef, q_coef, forcing_profiles, cfg, out_times, eps=None, w=None):
    out_times = np.asarray(out_times if out_times is not None else p.default_times(), dtype=float)
    if out_times[0] != 0.0 or np.any(np.diff(out_times) <= 0) or out_times[-1] > p.T:
        raise ValueError("output times must start at 0, increase strictly and stay inside [0, T]")
    trunc, params = p.trunc, p.params
    nu2 = symbol_weights(trunc, params)[0, 0]
    shape = (len(out_times),) + trunc.shape
    u = np.zeros(shape, dtype=complex)
    du = np.zeros(shape, dtype=complex)
    traces, odes, failures = {}, {}, {}
    forced = {(f.component, f.j, f.n): (f, prof) for f, prof in zip(p.forcing, forcing_profiles)}
    stats = {"nfev": 0}
    for n in range(trunc.n_max + 1):
        ode = ModeODE(float(nu2[n]), a_coef, q_coef, p.variant, T=p.T)
        odes[n] = ode
        try:
            phi = fundamental_matrix(ode, out_times, cfg, stats=stats)
        except IntegrationError as exc:
            for c, j, nn in trunc.indices():
                if nn == n:
                    failures[(c, j, n)] = str(exc)
            continue
        for c in trunc.components:
            for j in range(trunc.j_max + 1):
                key = (c, j, n)
                part = None
                if key in forced:
                    term, prof = forced[key]
                    fode = ModeODE(float(nu2[n]), a_coef, q_coef, p.variant,
                                   forcing=term.time_function(prof), T=p.T)
                    try:
                        part = particular_solution(fode, out_times, cfg, stats=stats)
                    except IntegrationError as exc:
                        failures[key] = str(exc)
                        continue
                ms = combine(ode, phi, p.u0.coeffs[c - 1, j, n], p.u1.coeffs[c - 1, j, n], out_times, part)
                u[:, c - 1, j, n] = ms.v
                du[:, c - 1, j, n] = ms.dv
                traces[key] = ms.trace
    if failures:
        raise SolveError(failures)
    # stored initial sample is the data itself
    u[0] = p.u0.coeffs
    du[0] = p.u1.coeffs
    funcs = tuple(f.time_function(prof) for f, prof in zip(p.forcing, forcing_profiles))
    return Solution(out_times, u, du, traces, p, odes, eps, w, stats["nfev"], _top_shell_fraction(p), funcs)


def solve_classical(p: CauchyProblem, cfg: IntegratorConfig | None = None, out_times=None) -> Solution:
    """Classical solve: coefficients evaluated pointwise, restarting at their jumps."""
    if p.has_deltas:
        raise PreconditionError("classical solve requires coefficients without delta terms")
    cfg = cfg or IntegratorConfig()
    profiles = [f.profile for f in p.forcing]
    return _solve(p, p.a, p.q, profiles, cfg, out_times)


def solve_regularized(p: CauchyProblem, psi: MollifierSpec, schedule: OmegaSchedule, eps: float,
                      cfg: IntegratorConfig | None = None, out_times=None) -> Solution:
    """Solve with a, q (and delta-carrying forcing profiles) mollified at width omega(eps).

    Cauchy data enter unregularised.
    """
    cfg = cfg or IntegratorConfig()
    w = omega(schedule, eps)
    if w > min(p.T, 1.0) / 2:
        warnings.warn(f"mollifier width {w:.4g} exceeds half of min(T, 1)", WideMollifierWarning, stacklevel=2)
    a_eps = regularize(p.a, psi, w)
    q_eps = regularize(p.q, psi, w)
    profiles = [regularize(f.profile, psi, w) if f.profile is not None and f.profile.has_deltas else f.profile
                for f in p.forcing]
    return _solve(p, a_eps, q_eps, profiles, cfg, out_times, eps=eps, w=w)


# --- norms and estimates ----------------------------------------------------------------


def solution_norms(sol: Solution, s: float | None = None):
    """(times, ||u(t)||_{H^{1+s}}, ||u_t(t)||_{H^s})."""
    s = sol.problem.s if s is None else s
    h1 = np.array([sobolev_norm(sol.u_at(k), 1 + s) for k in range(len(sol.times))])
    h0 = np.array([sobolev_norm(sol.du_at(k), s) for k in range(len(sol.times))])
    return sol.times, h1, h0


def second_derivative_norms(sol: Solution, s: float | None = None):
    """||u''(t)||_{H^{s-1}} with u'' taken from the equation."""
    s = sol.problem.s if s is None else s
    w = symbol_weights(sol.problem.trunc, sol.problem.params)
    ddu = sol.ddu()
    return np.sqrt(np.sum(w ** (s - 1) * np.abs(ddu) ** 2, axis=(1, 2, 3)))


def difference_norms(sol_a: Solution, sol_b: Solution, s: float | None = None):
    """||u_a - u_b||_{H^{1+s}} + ||u_a' - u_b'||_{H^s} at each output time."""
    s = sol_a.problem.s if s is None else s
    if not np.array_equal(sol_a.times, sol_b.times):
        raise ValueError("solutions are sampled on different time grids")
    w = symbol_weights(sol_a.problem.trunc, sol_a.problem.params)
    d0 = np.sqrt(np.sum(w ** (1 + s) * np.abs(sol_a.u - sol_b.u) ** 2, axis=(1, 2, 3)))
    d1 = np.sqrt(np.sum(w ** s * np.abs(sol_a.du - sol_b.du) ** 2, axis=(1, 2, 3)))
    return d0 + d1


@dataclass(frozen=True)
class EstimateCheck:
    passed: bool
    measured_C: float
    bound: float


def theoretical_constant(sol: Solution) -> float:
    """Largest per-level Gronwall constant over levels that carry data or forcing.

    Homogeneous: max_t exp(int c') max(kappa(0), 1) / min(kappa(t), 1).
    Forced: exp(int (c' + 1)) replaces the growth factor and max(kappa(0), 1, T)
    absorbs int_0^t ||f||^2 <= T sup ||f||^2.
    """
    p = sol.problem
    forced = bool(p.forcing)
    levels = set()
    for c, j, n in p.trunc.indices():
        if p.u0.coeffs[c - 1, j, n] != 0 or p.u1.coeffs[c - 1, j, n] != 0:
            levels.add(n)
    levels |= {f.n for f in p.forcing}
    best = 0.0
    for n in sorted(levels):
        ode = sol.odes[n]
        kap = np.asarray(ode.kappa(sol.times), dtype=float)
        G = np.exp(growth_integral(ode, sol.times, extra_rate=1.0 if forced else 0.0))
        lead = max(kap[0], 1.0, p.T) if forced else max(kap[0], 1.0)
        best = max(best, float(np.max(G * lead / np.minimum(kap, 1.0))))
    return best


def estimate_check(sol: Solution, p: CauchyProblem | None = None, slack: float = 0.1) -> EstimateCheck:
    """Measured C in ||u||^2_{H^{1+s}} + ||u_t||^2_{H^s} <= C (data norms [+ sup ||f||^2_{H^s}])."""
    p = p or sol.problem
    if p.has_deltas:
        raise PreconditionError("estimate_check applies in the classical regime")
    _, h1, h0 = solution_norms(sol, p.s)
    lhs = h1**2 + h0**2
    rhs = sobolev_norm(p.u0, 1 + p.s) ** 2 + sobolev_norm(p.u1, p.s) ** 2 + p.forcing_sup_hs(sol.times)
    if rhs == 0:
        return EstimateCheck(bool(np.all(lhs == 0)), 0.0, 0.0)
    measured = float(np.max(lhs) / rhs)
    bound = theoretical_constant(sol)
    return EstimateCheck(measured <= bound * (1 + slack), measured, bound)


# --- export ------------------------------------------------------------------------------


def _f(x) -> str:
    return format(float(x), ".17g")


def solution_to_csv(sol: Solution) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(("t", "j", "n", "component", "re_u", "im_u", "re_du", "im_du"))
    for k, t in enumerate(sol.times):
        for c, j, n in sol.problem.trunc.indices():
            u, du = sol.u[k, c - 1, j, n], sol.du[k, c - 1, j, n]
            wr.writerow((_f(t), j, n, c, _f(u.real), _f(u.imag), _f(du.real), _f(du.imag)))
    return buf.getvalue()


def norms_to_csv(sol: Solution, s: float | None = None) -> str:
    t, h1, h0 = solution_norms(sol, s)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(("t", "h_norm_1plus_s", "h_norm_s"))
    for row in zip(t, h1, h0):
        wr.writerow(tuple(_f(x) for x in row))
    return buf.getvalue()
