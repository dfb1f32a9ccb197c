"""Per-mode wave equation v'' + nu^2 kappa(t) v = f(t) and its energy.

With V1 = i nu v and V2 = v' the equation is the first-order system
V' = i nu A(t) V + F(t), A = [[0, 1], [kappa, 0]], F = (0, f), whose
symmetriser diag(kappa, 1) gives the energy E = kappa |V1|^2 + |V2|^2.

kappa = a (1 + q / nu^2) for CPa and kappa = a + q / nu^2 for CPb.

The homogeneous flow is real, so it is integrated once as a 2x2 real
fundamental matrix (four real unknowns) and applied to any complex data.
Forcing adds a particular solution with zero data, integrated as four real
unknowns (real and imaginary parts of v and v').
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .coefficients import RegularizedCoefficient, TimeDistribution


class IntegrationError(RuntimeError):
    pass


class ResonanceError(ValueError):
    pass


# --- coefficient adapters ----------------------------------------------------


class DirectCoefficient:
    """A delta-free TimeDistribution evaluated pointwise (the classical regime)."""

    def __init__(self, dist: TimeDistribution):
        if dist.has_deltas:
            raise ValueError("classical evaluation needs a coefficient without deltas")
        self.dist = dist
        self._fast = [(s.t_start, s.poly_coeffs[0]) for s in dist.segments] \
            if all(s.is_constant for s in dist.segments) else None

    def value(self, t):
        if self._fast is not None and np.ndim(t) == 0:
            val = self._fast[0][1]
            for start, c in self._fast:
                if t >= start:
                    val = c
            return val
        return self.dist.smooth_value(t)

    def derivative(self, t):
        return self.dist.smooth_derivative(t)

    def jumps(self):
        return self.dist.jumps()

    @property
    def breakpoints(self):
        return self.dist.breakpoints

    @property
    def T(self):
        return self.dist.T


class ConstantCoefficient:
    def __init__(self, c: float):
        self.c = float(c)

    def value(self, t):
        return self.c if np.ndim(t) == 0 else np.full(np.shape(t), self.c)

    def derivative(self, t):
        return 0.0 if np.ndim(t) == 0 else np.zeros(np.shape(t))

    def jumps(self):
        return []

    breakpoints = ()


class FunctionCoefficient:
    """Smooth coefficient from callables f(t) and f'(t)."""

    def __init__(self, f: Callable, df: Callable):
        self.f, self.df = f, df

    def value(self, t):
        return self.f(t)

    def derivative(self, t):
        return self.df(t)

    def jumps(self):
        return []

    breakpoints = ()


def as_coefficient(obj):
    if isinstance(obj, (int, float)):
        return ConstantCoefficient(obj)
    if isinstance(obj, TimeDistribution):
        return DirectCoefficient(obj)
    if isinstance(obj, RegularizedCoefficient):
        return obj
    if hasattr(obj, "value") and hasattr(obj, "derivative"):
        return obj
    raise TypeError(f"cannot use {type(obj).__name__} as a time coefficient")


def _breakpoints(c):
    return tuple(getattr(c, "breakpoints", ()))


# --- domain types ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModeODE:
    nu2: float
    a: object
    q: object = 0.0
    variant: str = "CPa"
    forcing: Callable | None = None
    T: float | None = None

    def __post_init__(self):
        if not self.nu2 > 0:
            raise ValueError("nu^2 must be positive")
        if self.variant not in ("CPa", "CPb"):
            raise ValueError(f"unknown variant {self.variant!r}")
        object.__setattr__(self, "a", as_coefficient(self.a))
        object.__setattr__(self, "q", as_coefficient(self.q))

    def kappa(self, t):
        a, q = self.a.value(t), self.q.value(t)
        if self.variant == "CPa":
            return a * (1.0 + q / self.nu2)
        return a + q / self.nu2

    def kappa_derivative(self, t):
        a, q = self.a.value(t), self.q.value(t)
        da, dq = self.a.derivative(t), self.q.derivative(t)
        if self.variant == "CPa":
            return da * (1.0 + q / self.nu2) + a * dq / self.nu2
        return da + dq / self.nu2

    @cached_property
    def breakpoints(self) -> tuple[float, ...]:
        pts = set(_breakpoints(self.a)) | set(_breakpoints(self.q)) | set(_breakpoints(self.forcing))
        return tuple(sorted(pts))

    def kappa_jumps(self):
        """(t, kappa(t-), kappa(t+)) at coefficient discontinuities."""
        out = []
        for t in sorted(set(_breakpoints(self.a)) | set(_breakpoints(self.q))):
            lo = self.kappa(math.nextafter(t, -math.inf))
            hi = self.kappa(t)
            out.append((t, float(lo), float(hi)))
        return out

    def horizon(self, fallback=None):
        for c in (self.a, self.q):
            T = getattr(c, "T", None)
            if T is not None:
                return T
        return self.T if self.T is not None else fallback

    def sample_times(self, T, n=2001):
        ts = [np.linspace(0.0, T, n)]
        for c in (self.a, self.q):
            src = getattr(c, "source", None)
            if src is not None:
                w = c.omega_value
                for t_i in [d[0] for d in src.deltas] + list(src.breakpoints):
                    ts.append(np.clip(t_i + w * np.linspace(-1, 1, 201), 0.0, T))
        for t_b in self.breakpoints:
            ts.append(np.array([max(t_b - 1e-12, 0.0), t_b]))
        return np.unique(np.concatenate(ts))

    def kappa_max(self, T) -> float:
        return float(np.max(self.kappa(self.sample_times(T))))


@dataclass(frozen=True)
class ModeState:
    V1: complex
    V2: complex
    t: float
    nu: float

    @property
    def v(self) -> complex:
        return self.V1 / (1j * self.nu)

    @property
    def dv(self) -> complex:
        return self.V2

    @classmethod
    def from_v(cls, v, dv, t, nu):
        return cls(1j * nu * v, complex(dv), float(t), float(nu))


@dataclass(frozen=True)
class Symmetriser:
    s11: float
    s22: float = 1.0

    def matrix(self):
        return np.diag([self.s11, self.s22])


@dataclass(frozen=True)
class EnergyTrace:
    times: np.ndarray
    energies: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        e = np.asarray(self.energies, dtype=float)
        if t.shape != e.shape:
            raise ValueError("times and energies differ in length")
        if np.any(e < 0):
            raise ValueError("energy must be nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "energies", e)

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step_fraction: float = 0.1
    verify: bool = False

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not 0 < v <= 1e-2:
                raise ValueError(f"{name} must lie in (0, 1e-2], got {v}")
        if not 0 < self.max_step_fraction <= 0.1:
            raise ValueError("max_step_fraction must lie in (0, 0.1]")


@dataclass(frozen=True)
class ModeSolution:
    times: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    trace: EnergyTrace
    nu: float

    @property
    def states(self):
        return [ModeState.from_v(v, d, t, self.nu) for t, v, d in zip(self.times, self.v, self.dv)]


# --- operations ---------------------------------------------------------------------


def assemble_system(ode: ModeODE, t: float):
    """A(t) = [[0, 1], [kappa, 0]] and F(t) = (0, f(t))."""
    A = np.array([[0.0, 1.0], [float(ode.kappa(t)), 0.0]])
    f = ode.forcing(t) if ode.forcing is not None else 0.0
    return A, np.array([0.0, f], dtype=complex)


def symmetriser_eval(ode: ModeODE, t: float) -> Symmetriser:
    return Symmetriser(float(ode.kappa(t)))


def energy(state: ModeState, sym: Symmetriser) -> float:
    return sym.s11 * abs(state.V1) ** 2 + sym.s22 * abs(state.V2) ** 2


def _step_cap(ode: ModeODE, T: float, cfg: IntegratorConfig) -> float:
    nu = math.sqrt(ode.nu2)
    period = 2 * math.pi / (nu * math.sqrt(ode.kappa_max(T)))
    return cfg.max_step_fraction * period


def _rhs_homogeneous(ode: ModeODE):
    nu2 = ode.nu2

    def rhs(t, y):
        k = nu2 * ode.kappa(t)
        # y = [phi00, phi01, phi10, phi11]; phi' = [[0, 1], [-k, 0]] phi
        return np.array([y[2], y[3], -k * y[0], -k * y[1]])

    return rhs


def _rhs_forced(ode: ModeODE):
    nu2 = ode.nu2

    def rhs(t, y):
        k = nu2 * ode.kappa(t)
        f = ode.forcing(t)
        # y = [Re v, Im v, Re v', Im v']
        return np.array([y[2], y[3], -k * y[0] + f.real, -k * y[1] + f.imag])

    return rhs


def _propagate(rhs, y0, t0, t1, t_eval, breakpoints, cfg, max_step, stats=None):
    """Integrate from t0 to t1 (either direction), restarting at breakpoints."""
    direction = 1.0 if t1 >= t0 else -1.0
    inner = sorted((b for b in breakpoints if min(t0, t1) < b < max(t0, t1)), reverse=direction < 0)
    nodes = [t0, *inner, t1]
    t_eval = np.asarray(t_eval, dtype=float)
    out = np.empty((len(y0), len(t_eval)))
    done = np.zeros(len(t_eval), dtype=bool)
    at_start = np.isclose(t_eval, t0, rtol=0, atol=0)
    out[:, at_start] = np.asarray(y0)[:, None]
    done |= at_start
    y = np.asarray(y0, dtype=float)
    for a, b in zip(nodes, nodes[1:]):
        if a == b:
            continue
        lo, hi = min(a, b), max(a, b)
        idx = np.flatnonzero((~done) & (t_eval >= lo) & (t_eval <= hi))
        ts = t_eval[idx]
        order = np.argsort(ts * direction, kind="stable")
        idx, ts = idx[order], ts[order]
        # the segment end is always evaluated so the next segment restarts from it
        ts_full = ts if len(ts) and ts[-1] == b else np.append(ts, b)
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", t_eval=ts_full,
                        rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=max_step,
                        first_step=min(max_step, abs(b - a)) / 8)
        if sol.status != 0:
            raise IntegrationError(f"integration failed at t={sol.t[-1]:.17g}: {sol.message}")
        if stats is not None:
            stats["nfev"] = stats.get("nfev", 0) + int(sol.nfev)
        out[:, idx] = sol.y[:, :len(ts)]
        done[idx] = True
        y = sol.y[:, -1]
    if not np.all(done):
        raise ValueError("output times lie outside the integration interval")
    return out


def fundamental_matrix(ode: ModeODE, out_times, cfg: IntegratorConfig, t0: float = 0.0, stats=None):
    """Phi(t) with [v(t), v'(t)] = Phi(t) [v(t0), v'(t0)]; shape (len(out_times), 2, 2)."""
    out_times = np.asarray(out_times, dtype=float)
    T = max(ode.horizon(fallback=t0), float(out_times.max()), t0)
    cap = _step_cap(ode, T, cfg)
    y = _propagate(_rhs_homogeneous(ode), [1.0, 0.0, 0.0, 1.0], t0, _far_end(out_times, t0),
                   out_times, ode.breakpoints, cfg, cap, stats)
    phi = y.T.reshape(-1, 2, 2)
    if cfg.verify:
        check = _propagate(_rhs_homogeneous(ode), [1.0, 0.0, 0.0, 1.0], t0, _far_end(out_times, t0),
                           out_times, ode.breakpoints, cfg, cap / 2)
        _compare(phi, check.T.reshape(-1, 2, 2), cfg, out_times)
    return phi


def _far_end(out_times, t0):
    return float(out_times.max()) if out_times.max() > t0 else float(out_times.min())


def _compare(a, b, cfg, times):
    err = np.abs(a - b)
    bound = 100 * (cfg.rel_tol * np.abs(b) + cfg.abs_tol)
    bad = np.argwhere(err > bound)
    if len(bad):
        raise IntegrationError(f"tolerance not met against step-halving check at t={times[bad[0][0]]:.6g}")


def particular_solution(ode: ModeODE, out_times, cfg: IntegratorConfig, t0: float = 0.0, stats=None):
    """v, v' of the forced problem with zero data at t0."""
    out_times = np.asarray(out_times, dtype=float)
    T = max(ode.horizon(fallback=t0), float(out_times.max()), t0)
    cap = _step_cap(ode, T, cfg)
    y = _propagate(_rhs_forced(ode), [0.0, 0.0, 0.0, 0.0], t0, _far_end(out_times, t0),
                   out_times, ode.breakpoints, cfg, cap, stats)
    return y[0] + 1j * y[1], y[2] + 1j * y[3]


def combine(ode: ModeODE, phi, v0, v1, out_times, particular=None) -> ModeSolution:
    v = phi[:, 0, 0] * v0 + phi[:, 0, 1] * v1
    dv = phi[:, 1, 0] * v0 + phi[:, 1, 1] * v1
    if particular is not None:
        v = v + particular[0]
        dv = dv + particular[1]
    nu = math.sqrt(ode.nu2)
    kap = np.asarray(ode.kappa(np.asarray(out_times, dtype=float)), dtype=float)
    E = kap * ode.nu2 * np.abs(v) ** 2 + np.abs(dv) ** 2
    return ModeSolution(np.asarray(out_times, dtype=float), np.asarray(v, dtype=complex),
                        np.asarray(dv, dtype=complex), EnergyTrace(out_times, E), nu)


def integrate_mode(ode: ModeODE, v0: complex, v1: complex, out_times,
                   cfg: IntegratorConfig | None = None, t0: float = 0.0, stats=None) -> ModeSolution:
    """Solve the mode equation with v(t0) = v0, v'(t0) = v1; out_times may precede t0."""
    cfg = cfg or IntegratorConfig()
    out_times = np.asarray(out_times, dtype=float)
    phi = fundamental_matrix(ode, out_times, cfg, t0, stats)
    part = particular_solution(ode, out_times, cfg, t0, stats) if ode.forcing is not None else None
    return combine(ode, phi, complex(v0), complex(v1), out_times, part)


# --- oracles and estimates -------------------------------------------------------------


def closed_form_constant(a0, q0, nu2, v0, v1, t, forcing=None, variant="CPa", derivative=False):
    """Exact solution for constant coefficients.

    ``forcing`` is (F0, sigma) for f(t) = F0 exp(i sigma t); the particular
    solution F0 exp(i sigma t) / (mu^2 - sigma^2) is corrected by a
    homogeneous term so that the initial data are matched.
    """
    mu2 = a0 * (q0 + nu2) if variant == "CPa" else a0 * nu2 + q0
    mu = math.sqrt(mu2)
    t = np.asarray(t, dtype=float)
    c0, c1 = complex(v0), complex(v1)
    p = dp = 0.0
    if forcing is not None:
        F0, sigma = forcing
        if math.isclose(sigma * sigma, mu2, rel_tol=1e-12):
            raise ResonanceError(f"forcing frequency {sigma} resonates with mu = {mu}")
        amp = F0 / (mu2 - sigma * sigma)
        p = amp * np.exp(1j * sigma * t)
        dp = 1j * sigma * p
        c0 = c0 - amp
        c1 = c1 - 1j * sigma * amp
    if derivative:
        out = -c0 * mu * np.sin(mu * t) + c1 * np.cos(mu * t) + dp
    else:
        out = c0 * np.cos(mu * t) + c1 * np.sin(mu * t) / mu + p
    return out if np.ndim(out) else complex(out)


def growth_integral(ode: ModeODE, times, extra_rate: float = 0.0, per_interval: int = 64):
    """Cumulative integral of c'(s) = |kappa'(s)| / min(kappa(s), 1) (+ extra_rate) at ``times``.

    Jumps of kappa contribute |kappa(t+) - kappa(t-)| / min(kappa(t-), kappa(t+), 1).
    """
    times = np.asarray(times, dtype=float)
    grid = [np.linspace(a, b, per_interval + 1) for a, b in zip(times[:-1], times[1:])]
    fine = np.unique(np.concatenate(grid + [ode.sample_times(float(times[-1]), 4001), times]))
    fine = fine[(fine >= times[0]) & (fine <= times[-1])]
    kap = np.asarray(ode.kappa(fine), dtype=float)
    dk = np.asarray(ode.kappa_derivative(fine), dtype=float)
    rate = np.abs(dk) / np.minimum(kap, 1.0) + extra_rate
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(fine))])
    for tj, lo, hi in ode.kappa_jumps():
        cum[fine >= tj] += abs(hi - lo) / min(lo, hi, 1.0)
    return np.interp(times, fine, cum)


def gronwall_bound(trace: EnergyTrace, ode: ModeODE, forcing_l2sq=None):
    """Upper bound for E(t) along the trace times.

    Homogeneous: E(0) exp(int c'). With forcing, E' <= (c' + 1) E + |f|^2 gives
    exp(int (c' + 1)) (E(0) + int |f|^2); ``forcing_l2sq`` is that cumulative
    integral at the trace times.
    """
    if forcing_l2sq is None and ode.forcing is not None:
        forcing_l2sq = _forcing_energy(ode, trace.times)
    extra = 1.0 if forcing_l2sq is not None else 0.0
    G = np.exp(growth_integral(ode, trace.times, extra_rate=extra))
    base = trace.energies[0] + (forcing_l2sq if forcing_l2sq is not None else 0.0)
    return G * base


def _forcing_energy(ode, times, per_interval=64):
    times = np.asarray(times, dtype=float)
    fine = np.unique(np.concatenate([np.linspace(a, b, per_interval + 1) for a, b in zip(times[:-1], times[1:])]))
    f2 = np.array([abs(ode.forcing(s)) ** 2 for s in fine])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (f2[1:] + f2[:-1]) * np.diff(fine))])
    # trapezoid can undershoot; a small relative margin keeps the bound conservative
    return np.interp(times, fine, cum) * (1 + 1e-6)


def gronwall_bound_check(trace: EnergyTrace, ode: ModeODE, tol: float = 1e-6) -> bool:
    if len(trace) == 0:
        raise ValueError("empty energy trace")
    bound = gronwall_bound(trace, ode)
    return bool(np.all(trace.energies <= bound * (1 + tol) + 1e-300))


@dataclass(frozen=True)
class EstimateResult:
    passed: bool
    measured: float
    bound: float


def mode_constant(ode: ModeODE, times) -> float:
    """C1' with nu^2|v(t)|^2 + |v'(t)|^2 <= C1' (nu^2|v0|^2 + |v1|^2) for all trace times."""
    times = np.asarray(times, dtype=float)
    kap = np.asarray(ode.kappa(times), dtype=float)
    G = np.exp(growth_integral(ode, times))
    return float(np.max(G * max(kap[0], 1.0) / np.minimum(kap, 1.0)))


def mode_estimate_check(ode: ModeODE, v0, v1, sol: ModeSolution, s: float = 0.0,
                        slack: float = 1e-6) -> EstimateResult:
    """Energy estimate in the weighted form; multiplying by (nu^2)^s on both sides
    leaves the ratio unchanged, so ``s`` only documents the Sobolev level."""
    if ode.forcing is not None:
        raise ValueError("mode_estimate_check covers the homogeneous equation")
    lhs = ode.nu2 * np.abs(sol.v) ** 2 + np.abs(sol.dv) ** 2
    rhs = ode.nu2 * abs(v0) ** 2 + abs(v1) ** 2
    bound = mode_constant(ode, sol.times)
    if rhs == 0:
        return EstimateResult(bool(np.all(lhs == 0)), 0.0, bound)
    measured = float(np.max(lhs) / rhs)
    return EstimateResult(measured <= bound * (1 + slack), measured, bound)
