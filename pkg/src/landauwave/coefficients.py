"""Time coefficients: piecewise-smooth functions plus Dirac deltas, mollifiers,
epsilon schedules and the regularised nets a_eps = a * psi_{omega(eps)}.

Convolutions against the bump are evaluated after the substitution
u = center + halfwidth * tanh(v), under which the bump measure becomes
exp(-cosh(v)^2) sech(v)^2 dv: an entire integrand with double-exponential
decay, so Gauss-Legendre converges geometrically even on partial supports.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)
# exp(-cosh(4)^2) ~ 1e-324: the bump measure vanishes beyond |v| = 4 in double precision
_V_CUT = 4.0


class OmegaWarning(UserWarning):
    pass


# --- time distributions -------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    """poly(t) + sum amp * sin(freq * t + phase) on [t_start, t_end).

    ``poly_coeffs`` are in ascending powers of absolute time t.
    """

    t_start: float
    t_end: float
    poly_coeffs: tuple[float, ...] = (0.0,)
    trig: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(f"segment end {self.t_end} must exceed start {self.t_start}")
        object.__setattr__(self, "poly_coeffs", tuple(float(c) for c in self.poly_coeffs) or (0.0,))
        object.__setattr__(self, "trig", tuple(tuple(float(x) for x in term) for term in self.trig))

    @property
    def is_constant(self) -> bool:
        return not self.trig and all(c == 0 for c in self.poly_coeffs[1:])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.polynomial.polynomial.polyval(t, self.poly_coeffs)
        for amp, freq, phase in self.trig:
            out = out + amp * np.sin(freq * t + phase)
        return out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        dc = np.polynomial.polynomial.polyder(self.poly_coeffs) if len(self.poly_coeffs) > 1 else [0.0]
        out = np.polynomial.polynomial.polyval(t, dc) * np.ones_like(t)
        for amp, freq, phase in self.trig:
            out = out + amp * freq * np.cos(freq * t + phase)
        return out

    def to_dict(self):
        d = {"t_start": self.t_start, "t_end": self.t_end, "poly_coeffs": list(self.poly_coeffs)}
        if self.trig:
            d["trig"] = [{"amp": a, "freq": f, "phase": p} for a, f, p in self.trig]
        return d

    @classmethod
    def from_dict(cls, d):
        trig = tuple((t["amp"], t["freq"], t.get("phase", 0.0)) for t in d.get("trig", ()))
        return cls(float(d["t_start"]), float(d["t_end"]), tuple(d.get("poly_coeffs", (0.0,))), trig)


@dataclass(frozen=True)
class TimeDistribution:
    """Piecewise-smooth part on [0, T] plus finitely many weighted deltas.

    Segments tile [0, T]; a jump between segments is a Heaviside step. The
    function is right-continuous and is extended by its end values outside
    [0, T].
    """

    T: float
    segments: tuple[Segment, ...]
    deltas: tuple[tuple[float, float], ...] = ()
    lower_bound: float | None = None

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("at least one segment is required")
        if segs[0].t_start != 0.0 or not math.isclose(segs[-1].t_end, self.T, rel_tol=0, abs_tol=1e-14):
            raise ValueError(f"segments must cover [0, {self.T}]")
        for s0, s1 in zip(segs, segs[1:]):
            if s0.t_end != s1.t_start:
                raise ValueError("segments must be contiguous with strictly increasing breakpoints")
        deltas = tuple(sorted((float(t), float(c)) for t, c in self.deltas))
        for t, _ in deltas:
            if not 0.0 < t < self.T:
                raise ValueError(f"delta at {t} must lie in the open interval (0, {self.T})")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "deltas", deltas)
        if self.lower_bound is not None:
            bad = self._first_violation(self.lower_bound)
            if bad is not None:
                raise ValueError(f"distribution violates the lower bound {self.lower_bound}: {bad}")

    # constructors
    @classmethod
    def constant(cls, value, T, deltas=(), lower_bound=None):
        return cls(T, (Segment(0.0, T, (value,)),), tuple(deltas), lower_bound)

    @classmethod
    def step(cls, before, after, at, T, deltas=(), lower_bound=None):
        return cls(T, (Segment(0.0, at, (before,)), Segment(at, T, (after,))), tuple(deltas), lower_bound)

    @classmethod
    def smooth(cls, T, poly_coeffs=(0.0,), trig=(), deltas=(), lower_bound=None):
        return cls(T, (Segment(0.0, T, tuple(poly_coeffs), tuple(trig)),), tuple(deltas), lower_bound)

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(s.t_start for s in self.segments[1:])

    @property
    def has_deltas(self) -> bool:
        return bool(self.deltas)

    def _segment_index(self, t):
        starts = np.array([s.t_start for s in self.segments])
        return np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(self.segments) - 1)

    def smooth_value(self, t):
        """The piecewise part at t (deltas ignored), constant outside [0, T]."""
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, 0.0, self.T)
        idx = self._segment_index(tc)
        out = np.empty_like(tc)
        for k, seg in enumerate(self.segments):
            m = idx == k
            if np.any(m):
                out[m] = seg(tc[m])
        return out if out.ndim else float(out)

    def smooth_derivative(self, t):
        t = np.asarray(t, dtype=float)
        idx = self._segment_index(np.clip(t, 0.0, self.T))
        out = np.zeros_like(t)
        for k, seg in enumerate(self.segments):
            m = (idx == k) & (t >= 0) & (t <= self.T)
            if np.any(m):
                out[m] = seg.derivative(t[m])
        return out if out.ndim else float(out)

    def jumps(self):
        """(t, left value, right value) at each breakpoint."""
        out = []
        for s0, s1 in zip(self.segments, self.segments[1:]):
            t = s1.t_start
            out.append((t, float(s0(t)), float(s1(t))))
        return out

    def _first_violation(self, a0, samples_per_segment=1001):
        for seg in self.segments:
            ts = np.linspace(seg.t_start, seg.t_end, samples_per_segment)
            vals = seg(ts)
            if np.min(vals) < a0:
                k = int(np.argmin(vals))
                return f"segment value {vals[k]} at t={ts[k]}"
        for t, c in self.deltas:
            if c < 0:
                return f"negative delta weight {c} at t={t}"
        return None

    def is_nonnegative(self) -> bool:
        return self._first_violation(0.0) is None

    def to_dict(self):
        d = {"segments": [s.to_dict() for s in self.segments],
             "deltas": [{"t": t, "weight": c} for t, c in self.deltas]}
        if self.lower_bound is not None:
            d["lower_bound"] = self.lower_bound
        return d

    @classmethod
    def from_dict(cls, d, T):
        segs = tuple(Segment.from_dict(s) for s in d["segments"])
        deltas = tuple((float(x["t"]), float(x["weight"])) for x in d.get("deltas", ()))
        return cls(float(T), segs, deltas, d.get("lower_bound"))


# --- mollifiers -----------------------------------------------------------------


def _bump_measure(v):
    c = np.cosh(v)
    return np.exp(-c * c) / (c * c)


def _bump_measure_slope(v):
    # d psi/du du after the tanh substitution, up to the 1/halfwidth factor
    c = np.cosh(v)
    return -2.0 * np.sinh(v) * c * np.exp(-c * c)


def _gl_nodes(a, b):
    """Legendre nodes/weights on [a_i, b_i] for arrays a, b (shape (m, 64))."""
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return half * _GL_X + 0.5 * (a + b), half * _GL_W


def _bump_integral(v_lo, v_hi, weight=_bump_measure):
    v, w = _gl_nodes(v_lo, v_hi)
    return np.sum(w * weight(v), axis=-1)


_BUMP_MASS = float(2.0 * _bump_integral(-_V_CUT, 0.0))


@dataclass(frozen=True)
class MollifierSpec:
    """Friedrichs mollifier supported in [-1, 1].

    ``standard_bump``: c exp(-1 / (1 - t^2)).
    ``shifted_bump``: the standard profile recentred at ``offset`` with
    half-width 1 - |offset|, so the support stays inside [-1, 1] but the
    mollifier is no longer even.
    """

    shape: str = "standard_bump"
    offset: float = 0.0

    def __post_init__(self):
        if self.shape not in ("standard_bump", "shifted_bump"):
            raise ValueError(f"unknown mollifier shape {self.shape!r}")
        if self.shape == "standard_bump" and self.offset != 0.0:
            raise ValueError("standard_bump has no offset")
        if not abs(self.offset) < 1:
            raise ValueError("offset must lie in (-1, 1)")

    @classmethod
    def shifted(cls, offset=0.3):
        return cls("shifted_bump", offset)

    @property
    def center(self) -> float:
        return self.offset

    @property
    def halfwidth(self) -> float:
        return 1.0 - abs(self.offset)

    @property
    def normalization(self) -> float:
        return 1.0 / (self.halfwidth * _BUMP_MASS)

    def to_v(self, u):
        """Map u to the tanh variable, clipped to the numerical support."""
        s = (np.asarray(u, dtype=float) - self.center) / self.halfwidth
        with np.errstate(divide="ignore"):
            v = np.arctanh(np.clip(s, -1.0, 1.0))
        return np.clip(v, -_V_CUT, _V_CUT)

    def to_u(self, v):
        return self.center + self.halfwidth * np.tanh(v)


def mollifier_eval(psi: MollifierSpec, t):
    t = np.asarray(t, dtype=float)
    s = (t - psi.center) / psi.halfwidth
    inside = np.abs(s) < 1
    out = np.zeros_like(s)
    si = s[inside]
    out[inside] = psi.normalization * np.exp(-1.0 / (1.0 - si * si))
    return out if out.ndim else float(out)


def mollifier_derivative(psi: MollifierSpec, t):
    t = np.asarray(t, dtype=float)
    s = (t - psi.center) / psi.halfwidth
    inside = np.abs(s) < 1
    out = np.zeros_like(s)
    si = s[inside]
    g = 1.0 - si * si
    out[inside] = psi.normalization / psi.halfwidth * np.exp(-1.0 / g) * (-2.0 * si / (g * g))
    return out if out.ndim else float(out)


def mollifier_antiderivative(psi: MollifierSpec, t):
    """Psi(t) = integral of psi up to t."""
    v = np.asarray(psi.to_v(t), dtype=float)
    cut = np.full_like(v, _V_CUT)
    # integrate the shorter tail so values near 0 and near 1 both keep full relative accuracy
    lower = _bump_integral(-cut, np.minimum(v, 0.0)) / _BUMP_MASS
    upper = _bump_integral(np.maximum(v, 0.0), cut) / _BUMP_MASS
    out = np.clip(np.where(v <= 0, lower, 1.0 - upper), 0.0, 1.0)
    return out if out.ndim else float(out)


# --- epsilon schedules ------------------------------------------------------------


@dataclass(frozen=True)
class OmegaSchedule:
    kind: str = "log"
    p: float = 1.0
    value: float = 0.1

    def __post_init__(self):
        if self.kind not in ("log", "power", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "power" and not self.p > 0:
            raise ValueError("power schedule needs p > 0")

    @classmethod
    def parse(cls, text: str) -> OmegaSchedule:
        """'log', 'power:<p>' or 'constant:<w>'."""
        kind, _, arg = text.partition(":")
        if kind == "log" and not arg:
            return cls("log")
        if kind == "power":
            return cls("power", p=float(arg or 1.0))
        if kind == "constant":
            return cls("constant", value=float(arg))
        raise ValueError(f"cannot parse schedule {text!r}")

    def label(self) -> str:
        if self.kind == "log":
            return "log"
        if self.kind == "power":
            return f"power:{self.p:g}"
        return f"constant:{self.value:g}"


def omega(schedule: OmegaSchedule, eps: float) -> float:
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if schedule.kind == "log":
        w = 1.0 / math.log(1.0 / eps)
    elif schedule.kind == "power":
        w = eps**schedule.p
    else:
        w = schedule.value
    if w > 1.0:
        warnings.warn(f"omega({eps}) = {w:.4g} exceeds 1", OmegaWarning, stacklevel=2)
    return w


# --- regularised coefficients ---------------------------------------------------------


@dataclass(frozen=True)
class _Piece:
    lo: float
    hi: float
    func: object  # callable of t, vectorised
    const: float | None


def _pieces(dist: TimeDistribution):
    segs = dist.segments
    first, last = segs[0], segs[-1]
    out = [_Piece(-math.inf, 0.0, None, float(first(0.0)))]
    for s in segs:
        out.append(_Piece(s.t_start, s.t_end, s, float(s.poly_coeffs[0]) if s.is_constant else None))
    out.append(_Piece(dist.T, math.inf, None, float(last(dist.T))))
    return out


@dataclass(frozen=True, eq=False)
class RegularizedCoefficient:
    """a_w = a * psi_w evaluated on demand; ``value`` and ``derivative`` are vectorised."""

    source: TimeDistribution
    mollifier: MollifierSpec
    omega_value: float
    _pieces: list = field(init=False, repr=False)

    def __post_init__(self):
        if not self.omega_value > 0:
            raise ValueError("omega must be positive")
        object.__setattr__(self, "_pieces", _pieces(self.source))

    @property
    def T(self) -> float:
        return self.source.T

    @cached_property
    def breakpoints(self) -> tuple[float, ...]:
        """Support edges and centre of every smoothed delta, inside [0, T].

        An integrator restarting here cannot step over a pulse narrower than its step.
        """
        psi, w = self.mollifier, self.omega_value
        pts = set()
        for t_i, _ in self.source.deltas:
            for u in (psi.center - psi.halfwidth, psi.center, psi.center + psi.halfwidth):
                pts.add(t_i + w * u)
        return tuple(sorted(t for t in pts if 0.0 < t < self.T))

    def _convolve(self, t, slope: bool):
        psi, w = self.mollifier, self.omega_value
        weight = _bump_measure_slope if slope else _bump_measure
        scale = 1.0 / (_BUMP_MASS * (w * psi.halfwidth if slope else 1.0))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        total = np.zeros_like(t)
        for piece in self._pieces:
            # tau = t - w u lies in [lo, hi]  <=>  u in [(t - hi)/w, (t - lo)/w]
            v_lo = psi.to_v((t - piece.hi) / w)
            v_hi = psi.to_v((t - piece.lo) / w)
            active = v_hi > v_lo
            if not np.any(active):
                continue
            v, gw = _gl_nodes(v_lo[active], v_hi[active])
            kern = gw * weight(v)
            if piece.const is not None:
                total[active] += piece.const * kern.sum(axis=-1)
            else:
                tau = t[active, None] - w * psi.to_u(v)
                total[active] += np.sum(kern * piece.func(tau), axis=-1)
        total *= scale
        for t_i, c_i in self.source.deltas:
            if slope:
                total += c_i * mollifier_derivative(psi, (t - t_i) / w) / (w * w)
            else:
                total += c_i * mollifier_eval(psi, (t - t_i) / w) / w
        return total

    def _convolve_scalar(self, t: float, slope: bool) -> float:
        # same quadrature as _convolve, minus the array overhead; used inside ODE right-hand sides
        psi, w = self.mollifier, self.omega_value
        c, h = psi.center, psi.halfwidth
        weight = _bump_measure_slope if slope else _bump_measure
        total = 0.0
        for piece in self._pieces:
            s_lo = ((t - piece.hi) / w - c) / h
            s_hi = ((t - piece.lo) / w - c) / h
            if s_hi <= -1.0 or s_lo >= 1.0:
                continue
            v_lo = -_V_CUT if s_lo <= -1.0 else max(math.atanh(s_lo), -_V_CUT)
            v_hi = _V_CUT if s_hi >= 1.0 else min(math.atanh(s_hi), _V_CUT)
            if v_hi <= v_lo:
                continue
            if piece.const is not None and v_lo == -_V_CUT and v_hi == _V_CUT:
                total += 0.0 if slope else piece.const * _BUMP_MASS
                continue
            half = 0.5 * (v_hi - v_lo)
            v = half * _GL_X + 0.5 * (v_hi + v_lo)
            kern = half * _GL_W * weight(v)
            if piece.const is not None:
                total += piece.const * float(kern.sum())
            else:
                tau = t - w * (c + h * np.tanh(v))
                total += float(np.dot(kern, piece.func(tau)))
        total /= _BUMP_MASS * (w * h if slope else 1.0)
        norm = psi.normalization
        for t_i, c_i in self.source.deltas:
            si = ((t - t_i) / w - c) / h
            if abs(si) < 1.0:
                g = 1.0 - si * si
                bump = norm * math.exp(-1.0 / g)
                if slope:
                    total += c_i * bump * (-2.0 * si / (g * g)) / (h * w * w)
                else:
                    total += c_i * bump / w
        return total

    def value(self, t):
        if np.ndim(t) == 0:
            return self._convolve_scalar(float(t), slope=False)
        return self._convolve(t, slope=False)

    def derivative(self, t):
        if np.ndim(t) == 0:
            return self._convolve_scalar(float(t), slope=True)
        return self._convolve(t, slope=True)

    __call__ = value


def regularize(dist: TimeDistribution, psi: MollifierSpec, w: float) -> RegularizedCoefficient:
    return RegularizedCoefficient(dist, psi, float(w))


def verify_lower_bound(reg: RegularizedCoefficient, a0: float, t_samples) -> bool:
    """value(t) >= a0 at every sample (boundary-mass correction is zero here)."""
    vals = reg.value(np.asarray(t_samples, dtype=float))
    return bool(np.all(vals >= a0 * (1.0 - 1e-12)))


@dataclass(frozen=True)
class ModeratenessFit:
    exponents: tuple[float, ...]
    residuals: tuple[float, ...]
    sup_values: tuple[tuple[float, ...], ...]


def sup_abs(reg: RegularizedCoefficient, k: int, samples: int = 2001) -> float:
    """Grid supremum of |d^k a_w / dt^k| on [0, T], refined around every delta."""
    T = reg.T
    ts = [np.linspace(0.0, T, samples)]
    w = reg.omega_value
    for t_i, _ in reg.source.deltas:
        ts.append(np.clip(t_i + w * np.linspace(-1, 1, 401), 0.0, T))
    for t_b in reg.source.breakpoints:
        ts.append(np.clip(t_b + w * np.linspace(-1, 1, 401), 0.0, T))
    t = np.unique(np.concatenate(ts))
    f = reg.value if k == 0 else reg.derivative
    return float(np.max(np.abs(f(t))))


def loglog_slope(x, y) -> tuple[float, float]:
    """Least-squares slope of log y against log x and the RMS residual.

    Constant data (to machine precision) gives slope 0 with zero residual.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.all(np.abs(y - y[0]) <= 1e-14 * np.abs(y[0])):
        return 0.0, 0.0
    lx, ly = np.log(x), np.log(y)
    coef, res, *_ = np.polyfit(lx, ly, 1, full=True)
    rms = math.sqrt(float(res[0]) / len(x)) if len(res) else 0.0
    return float(coef[0]), rms


def moderateness_bound_estimate(dist: TimeDistribution, psi: MollifierSpec, schedule: OmegaSchedule,
                                eps_grid, k_max: int = 1) -> ModeratenessFit:
    """Fit sup_t |d^k a_eps| ~ omega(eps)^(-L_k) for k = 0..k_max."""
    eps_grid = list(eps_grid)
    if len(eps_grid) < 4:
        raise ValueError("need at least 4 epsilon values")
    if k_max > 1:
        raise ValueError("only k <= 1 is evaluated directly")
    omegas = [omega(schedule, e) for e in eps_grid]
    regs = [regularize(dist, psi, w) for w in omegas]
    inv_w = [1.0 / w for w in omegas]
    exps, resids, sups = [], [], []
    for k in range(k_max + 1):
        s = [sup_abs(r, k) for r in regs]
        if max(s) == 0.0:
            slope, rms = 0.0, 0.0
        else:
            slope, rms = loglog_slope(inv_w, s)
        exps.append(slope)
        resids.append(rms)
        sups.append(tuple(s))
    return ModeratenessFit(tuple(exps), tuple(resids), tuple(sups))
