"""Experiment driver: solution nets over an epsilon grid and their diagnostics.

A net is the family of regularised solutions u_eps for eps on a finite grid.
Suprema over time are grid suprema on the solution output grid.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .cauchy_engine import (
    CauchyProblem,
    ForcingTerm,
    PreconditionError,
    Solution,
    SolveError,
    difference_norms,
    second_derivative_norms,
    solution_norms,
    solve_classical,
    solve_regularized,
)
from .coefficients import MollifierSpec, OmegaSchedule, Segment, TimeDistribution, loglog_slope
from .h_fourier import SpectralField, TruncationSpec
from .mode_solver import IntegrationError, IntegratorConfig
from .spectral_basis import BasisParams

log = logging.getLogger(__name__)

SUMMARY_SCHEMA = "landauwave-summary/1"
NORMS_HEADER = ("eps", "t", "h_norm_1plus_s", "h_norm_s")
DIAG_HEADER = ("eps", "k", "sup_norm")


class NetFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class EpsilonGrid:
    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("epsilon grid is empty")
        if any(not 0 < v < 1 for v in vals):
            raise ValueError("epsilon values must lie in (0, 1)")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError("epsilon grid must be strictly decreasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_powers(cls, k_min: int = 2, k_max: int = 12) -> EpsilonGrid:
        if k_min < 1 or k_max < k_min:
            raise ValueError(f"need 1 <= k_min <= k_max, got {k_min}:{k_max}")
        return cls(tuple(2.0 ** -k for k in range(k_min, k_max + 1)))

    @classmethod
    def parse(cls, text: str) -> EpsilonGrid:
        lo, _, hi = text.partition(":")
        return cls.from_powers(int(lo), int(hi))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


DEFAULT_GRID = EpsilonGrid.from_powers(2, 12)


@dataclass(frozen=True, eq=False)
class NetDiagnostics:
    """sup_t norms per eps; rows of ``sup_norms`` are eps, columns k = 0, 1, 2.

    k = 0: ||u||_{H^{1+s}}, k = 1: ||u_t||_{H^s}, k = 2: ||u_tt||_{H^{s-1}}.
    Failed solves leave a NaN row and an entry in ``failures``.
    """

    eps: np.ndarray
    sup_norms: np.ndarray
    times: np.ndarray | None = None
    h1: np.ndarray | None = None     # (n_eps, n_times)
    h0: np.ndarray | None = None
    nfev: tuple[int, ...] = ()
    failures: dict = field(default_factory=dict)

    def __post_init__(self):
        sup = np.asarray(self.sup_norms, dtype=float)
        ok = ~np.isnan(sup)
        if np.any(sup[ok] < 0) or not np.all(np.isfinite(sup[ok])):
            raise ValueError("sup norms must be finite and nonnegative")
        object.__setattr__(self, "sup_norms", sup)
        object.__setattr__(self, "eps", np.asarray(self.eps, dtype=float))

    @classmethod
    def synthetic(cls, eps, sup_norms) -> NetDiagnostics:
        sup = np.asarray(sup_norms, dtype=float)
        if sup.ndim == 1:
            sup = sup[:, None]
        return cls(np.asarray(eps, dtype=float), sup)

    @property
    def succeeded(self) -> np.ndarray:
        return ~np.isnan(self.sup_norms).any(axis=1)


def run_net(p: CauchyProblem, psi: MollifierSpec, schedule: OmegaSchedule, grid: EpsilonGrid = DEFAULT_GRID,
            cfg: IntegratorConfig | None = None, out_times=None):
    """One regularised solve per eps; returns ({eps: Solution}, NetDiagnostics)."""
    if not len(grid):
        raise ValueError("epsilon grid is empty")
    cfg = cfg or IntegratorConfig()
    sols, failures = {}, {}
    times = np.asarray(out_times if out_times is not None else p.default_times(), dtype=float)
    sup = np.full((len(grid), 3), np.nan)
    h1 = np.full((len(grid), len(times)), np.nan)
    h0 = np.full((len(grid), len(times)), np.nan)
    nfev = []
    for i, eps in enumerate(grid):
        try:
            sol = solve_regularized(p, psi, schedule, eps, cfg, times)
        except (IntegrationError, SolveError, FloatingPointError) as exc:
            log.warning("net solve failed at eps=%g: %s", eps, exc)
            failures[eps] = str(exc)
            nfev.append(0)
            continue
        sols[eps] = sol
        _, h1[i], h0[i] = solution_norms(sol, p.s)
        h2 = second_derivative_norms(sol, p.s)
        sup[i] = (h1[i].max(), h0[i].max(), h2.max())
        nfev.append(sol.nfev)
    diag = NetDiagnostics(np.array(grid.values), sup, times, h1, h0, tuple(nfev), failures)
    if 2 * len(failures) > len(grid):
        raise NetFailure(f"{len(failures)} of {len(grid)} net solves failed")
    return sols, diag


@dataclass(frozen=True)
class ModeratenessReport:
    exponents: dict          # "k0" -> fitted N
    residuals: dict
    half_slopes: dict        # "k0" -> (first half, second half)
    passed: bool

    def to_dict(self):
        return {"exponents": dict(self.exponents), "residuals": dict(self.residuals),
                "half_slopes": {k: list(v) for k, v in self.half_slopes.items()}, "passed": self.passed}


def fit_moderateness(diag: NetDiagnostics, stability: float = 0.5) -> ModeratenessReport:
    """Slope of log(sup norm) against log(1/eps) per derivative order k.

    Passes iff every slope is finite and the two half-grid slopes differ by < ``stability``.
    """
    ok = diag.succeeded
    if ok.sum() < 4:
        raise ValueError(f"need at least 4 successful epsilon points, got {int(ok.sum())}")
    inv = 1.0 / diag.eps[ok]
    m = len(inv)
    exps, res, halves = {}, {}, {}
    passed = True
    for k in range(diag.sup_norms.shape[1]):
        y = diag.sup_norms[ok, k]
        if np.any(y <= 0):
            # a vanishing norm is trivially moderate
            slope, rms, first, second = 0.0, 0.0, 0.0, 0.0
        else:
            slope, rms = loglog_slope(inv, y)
            first, _ = loglog_slope(inv[: (m + 1) // 2], y[: (m + 1) // 2])
            second, _ = loglog_slope(inv[m // 2:], y[m // 2:])
        key = f"k{k}"
        exps[key], res[key], halves[key] = float(slope), float(rms), (float(first), float(second))
        passed &= bool(np.isfinite(slope) and abs(first - second) < stability)
    return ModeratenessReport(exps, res, halves, passed)


def _verdict(values, ratio_limit):
    values = np.asarray(values, dtype=float)
    inversions = int(np.sum(np.diff(values) > 0))
    first, last = values[0], values[-1]
    ratio = float(last / first) if first > 0 else 0.0
    return inversions, ratio, inversions <= 1 and ratio <= ratio_limit


@dataclass(frozen=True)
class ConsistencyReport:
    eps: tuple
    errors: tuple
    inversions: int
    ratio: float
    ratio_limit: float
    consistent: bool

    def to_dict(self):
        return {"eps": list(self.eps), "errors": list(self.errors), "inversions": self.inversions,
                "ratio": self.ratio, "ratio_limit": self.ratio_limit, "consistent": self.consistent}


def check_consistency(p_regular: CauchyProblem, psi: MollifierSpec, schedule: OmegaSchedule,
                      grid: EpsilonGrid = DEFAULT_GRID, cfg: IntegratorConfig | None = None,
                      ratio_limit: float | None = None, out_times=None):
    """Compare the regularised net with the classical solution; returns (report, NetDiagnostics).

    Consistent iff the sup-in-time errors decrease along the grid with at most one
    inversion and final/initial <= ratio_limit (0.5 for the log schedule, else 0.2).
    """
    if p_regular.has_deltas:
        raise PreconditionError("consistency needs coefficients without deltas")
    cfg = cfg or IntegratorConfig()
    if ratio_limit is None:
        ratio_limit = 0.5 if schedule.kind == "log" else 0.2
    classical = solve_classical(p_regular, cfg, out_times)
    sols, diag = run_net(p_regular, psi, schedule, grid, cfg, classical.times)
    eps = tuple(e for e in grid if e in sols)
    errors = tuple(float(difference_norms(sols[e], classical).max()) for e in eps)
    inv, ratio, ok = _verdict(errors, ratio_limit)
    return ConsistencyReport(eps, errors, inv, ratio, ratio_limit, ok), diag


@dataclass(frozen=True)
class NegligibilityReport:
    eps: tuple
    differences: tuple
    inversions: int
    decreasing: bool

    def to_dict(self):
        return {"eps": list(self.eps), "differences": list(self.differences),
                "inversions": self.inversions, "decreasing": self.decreasing}


def check_uniqueness_stability(p: CauchyProblem, psi_A: MollifierSpec, psi_B: MollifierSpec,
                               schedule: OmegaSchedule, grid: EpsilonGrid = DEFAULT_GRID,
                               cfg: IntegratorConfig | None = None, out_times=None):
    """sup_t difference between the nets of two mollifiers; returns (report, NetDiagnostics of A).

    The verdict only records whether differences decrease; decay faster than every
    power of eps cannot be certified on a finite grid.
    """
    cfg = cfg or IntegratorConfig()
    sols_a, diag = run_net(p, psi_A, schedule, grid, cfg, out_times)
    sols_b = sols_a if psi_B == psi_A else run_net(p, psi_B, schedule, grid, cfg, out_times)[0]
    eps = tuple(e for e in grid if e in sols_a and e in sols_b)
    diffs = tuple(float(difference_norms(sols_a[e], sols_b[e]).max()) for e in eps)
    inv, _, _ = _verdict(diffs, math.inf)
    decreasing = inv <= 1 and (len(diffs) < 2 or diffs[-1] <= diffs[0])
    return NegligibilityReport(eps, diffs, inv, decreasing), diag


# --- presets ------------------------------------------------------------------------

SCENARIOS = ("ex1", "ex2", "regular", "inhomogeneous")
_T = 2.0


def _single_mode(trunc, params):
    u0 = SpectralField.from_entries(trunc, params, {(1, 0, 0): 1.0})
    return u0, SpectralField.zeros(trunc, params)


def scenario(name: str, trunc: TruncationSpec | None = None) -> CauchyProblem:
    """Preset problems on [0, 2] with B = 1, s = 0, u0 = e1_(0,0), u1 = 0."""
    trunc = trunc or TruncationSpec(2, 4)
    params = BasisParams(1.0)
    u0, u1 = _single_mode(trunc, params)
    forcing = ()
    if name == "ex1":
        # a = delta_1 alone has no positive lower bound; shift by 1
        a = TimeDistribution.constant(1.0, _T, deltas=((1.0, 1.0),), lower_bound=1.0)
        q = TimeDistribution.constant(0.0, _T, deltas=((1.0, 1.0),))
    elif name == "ex2":
        a = TimeDistribution.step(1.0, 2.0, 1.0, _T, lower_bound=1.0)
        q = TimeDistribution.step(1.0, 2.0, 1.0, _T, deltas=((1.0, 1.0),))
    elif name == "regular":
        a = TimeDistribution.smooth(_T, (2.0,), trig=((1.0, 1.0, 0.0),), lower_bound=1.0)
        q = TimeDistribution(_T, (Segment(0.0, 1.0, (1.0, 1.0)), Segment(1.0, _T, (1.0, 1.0))))
    elif name == "inhomogeneous":
        a = TimeDistribution.constant(1.0, _T, lower_bound=1.0)
        q = TimeDistribution.constant(0.0, _T, deltas=((1.0, 1.0),))
        forcing = (ForcingTerm(1, 0, 0, 1.0, 0.5),)
    else:
        raise KeyError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    return CauchyProblem("CPa", params, _T, a, q, u0, u1, trunc, 0.0, forcing)


# --- export ---------------------------------------------------------------------------


def _num(x):
    x = float(x)
    return None if math.isnan(x) else x


def _fmt(x) -> str:
    return format(float(x), ".17g")


def summarize(reports) -> dict:
    out = {"schema": SUMMARY_SCHEMA}
    for rep in reports:
        if isinstance(rep, NetDiagnostics):
            out["net"] = {
                "eps": [float(e) for e in rep.eps],
                "sup_norms": {f"k{k}": [_num(v) for v in rep.sup_norms[:, k]] for k in range(rep.sup_norms.shape[1])},
                "failures": {format(float(e), ".17g"): msg for e, msg in sorted(rep.failures.items())},
            }
            # integrator effort as right-hand-side evaluations keeps the file reproducible
            out["runtimes"] = {"unit": "rhs_evaluations", "per_eps": list(rep.nfev), "total": int(sum(rep.nfev))}
        elif isinstance(rep, ModeratenessReport):
            out["moderateness"] = dict(rep.exponents)
            out["moderateness_fit"] = rep.to_dict()
        elif isinstance(rep, ConsistencyReport):
            out["consistency"] = rep.to_dict()
        elif isinstance(rep, NegligibilityReport):
            out["uniqueness"] = rep.to_dict()
        elif isinstance(rep, dict):
            out.update(rep)
        else:
            raise TypeError(f"cannot export {type(rep).__name__}")
    return out


def export_reports(reports, path) -> list[str]:
    """Write norms.csv, net_diagnostics.csv and summary.json into directory ``path``."""
    reports = list(reports)
    try:
        os.makedirs(path, exist_ok=True)
        nets = [r for r in reports if isinstance(r, NetDiagnostics)]
        files = []
        fn = os.path.join(path, "norms.csv")
        with open(fn, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(NORMS_HEADER)
            for net in nets:
                if net.times is None:
                    continue
                for i, eps in enumerate(net.eps):
                    if not net.succeeded[i]:
                        continue
                    for t, a, b in zip(net.times, net.h1[i], net.h0[i]):
                        w.writerow((_fmt(eps), _fmt(t), _fmt(a), _fmt(b)))
        files.append(fn)
        fn = os.path.join(path, "net_diagnostics.csv")
        with open(fn, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DIAG_HEADER)
            for net in nets:
                for i, eps in enumerate(net.eps):
                    for k in range(net.sup_norms.shape[1]):
                        v = net.sup_norms[i, k]
                        w.writerow((_fmt(eps), k, "nan" if math.isnan(v) else _fmt(v)))
        files.append(fn)
        fn = os.path.join(path, "summary.json")
        with open(fn, "w") as fh:
            json.dump(summarize(reports), fh, indent=2, sort_keys=True)
            fh.write("\n")
        files.append(fn)
    except OSError as exc:
        raise OSError(f"cannot write reports to {path}: {exc}") from exc
    return files
