"""Landau levels, Laguerre polynomials and the planar eigenbasis.

The Landau Hamiltonian in the symmetric gauge,

    H = 1/2 [ (i d/dx - B y)^2 + (i d/dy + B x)^2 ],

has eigenvalues (2n + 1) B. Two families of eigenfunctions are provided,

    e1_{j,n}(x, y) ~ (x + iy)^j L_n^{(j)}(B r^2) exp(-B r^2 / 2)
    e2_{j,n}(x, y) ~ (x - iy)^n L_j^{(n)}(B r^2) exp(-B r^2 / 2)

and every downstream quantity uses their unit-normalised versions, the norm
being computed on a :class:`QuadratureGrid`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.special as sps

SUM_FORMULA_MAX_N = 12
DEFAULT_RADIAL = 200
DEFAULT_ANGULAR = 256


class QuadratureResolutionError(ValueError):
    """The quadrature grid cannot integrate the requested basis exactly."""


@dataclass(frozen=True)
class BasisParams:
    B: float = 1.0

    def __post_init__(self):
        if not self.B > 0:
            raise ValueError(f"magnetic strength B must be positive, got {self.B}")


@dataclass(frozen=True, order=True)
class SpectralIndex:
    j: int
    n: int

    def __post_init__(self):
        if self.j < 0 or self.n < 0:
            raise ValueError(f"spectral index must be nonnegative, got ({self.j}, {self.n})")


def _as_index(xi) -> SpectralIndex:
    if isinstance(xi, SpectralIndex):
        return xi
    j, n = xi
    return SpectralIndex(int(j), int(n))


# --- Laguerre polynomials -------------------------------------------------


def _check_alpha(alpha):
    if not alpha > -1:
        raise ValueError(f"Laguerre parameter alpha must exceed -1, got {alpha}")


def _gen_binom(top, k):
    # C(top, k) for real top, integer k >= 0
    out = 1.0
    for i in range(1, k + 1):
        out *= (top - k + i) / i
    return out


def laguerre_sum(n: int, alpha: float, t):
    """Explicit alternating sum sum_k (-1)^k C(n+alpha, n-k) t^k / k!.

    Floating point; loses relative accuracy for large ``n`` and ``t``.
    """
    _check_alpha(alpha)
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    # Horner in t, highest power first
    for k in range(n, -1, -1):
        coef = (-1) ** k * _gen_binom(n + alpha, n - k) / math.factorial(k)
        out = out * t + coef
    return out if out.ndim else float(out)


def laguerre_sum_exact(n: int, alpha, t) -> float:
    """The same sum in exact rational arithmetic, rounded once at the end."""
    _check_alpha(alpha)
    a = Fraction(alpha)
    x = Fraction(t)
    total = Fraction(0)
    for k in range(n + 1):
        m = n - k
        binom = Fraction(1)
        for i in range(1, m + 1):
            binom *= (n + a - m + i) / i
        total += (-1) ** k * binom * x**k / math.factorial(k)
    return float(total)


def laguerre_recurrence(n: int, alpha: float, t, scale=None):
    """Three-term recurrence (k+1) L_{k+1} = (2k+1+alpha-t) L_k - (k+alpha) L_{k-1}.

    ``scale`` multiplies the starting value; passing ``exp(-t/2)`` yields
    Laguerre functions without overflow at large ``t``.
    """
    _check_alpha(alpha)
    t = np.asarray(t, dtype=float)
    p0 = np.ones_like(t) if scale is None else np.asarray(scale, dtype=float) * np.ones_like(t)
    if n == 0:
        return p0 if p0.ndim else float(p0)
    p1 = (1.0 + alpha - t) * p0
    for k in range(1, n):
        p0, p1 = p1, ((2 * k + 1 + alpha - t) * p1 - (k + alpha) * p0) / (k + 1)
    return p1 if p1.ndim else float(p1)


def laguerre_eval(n: int, alpha: float, t):
    """Generalised Laguerre polynomial L_n^{(alpha)}(t).

    Uses the explicit sum for ``n <= 12`` and the recurrence above that.
    """
    if n < 0:
        raise ValueError("Laguerre degree must be nonnegative")
    if n <= SUM_FORMULA_MAX_N:
        return laguerre_sum(n, alpha, t)
    return laguerre_recurrence(n, alpha, t)


# --- spectrum ---------------------------------------------------------------


def eigenvalue(n: int, params: BasisParams) -> float:
    return (2 * n + 1) * params.B


def nu_squared(xi, params: BasisParams) -> float:
    """B (1 + 2n): the symbol of H at xi = (j, n); independent of j."""
    return eigenvalue(_as_index(xi).n, params)


# --- quadrature ---------------------------------------------------------------


@lru_cache(maxsize=None)
def _laguerre_rule(count: int):
    """Gauss-Laguerre nodes t_i and weights w_i * exp(t_i).

    Weights come from w_i = t_i / ((N+1) L_{N+1}(t_i))^2 evaluated with
    Laguerre *functions*, so the exp(t_i) factor never overflows.
    """
    t, _ = sps.roots_laguerre(count)
    for _ in range(2):
        lm1 = laguerre_recurrence(count - 1, 0.0, t, scale=np.exp(-t / 2))
        ln = laguerre_recurrence(count, 0.0, t, scale=np.exp(-t / 2))
        t = t - ln * t / (count * (ln - lm1))
    l_next = laguerre_recurrence(count + 1, 0.0, t, scale=np.exp(-t / 2))
    scaled_w = t / ((count + 1) ** 2 * l_next**2)
    return t, scaled_w


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Product rule on the plane: Gauss-Laguerre in t = B r^2, trapezoid in angle.

    ``weights[i, m]`` already contain the area element, so
    ``sum(weights * f(x, y))`` approximates the integral of f over R^2.
    Exact for (polynomial of degree <= 2 * radial_count - 1 in r^2) times
    exp(-B r^2) times exp(i k theta) with |k| < angular_count.
    """

    B: float
    radial_count: int = DEFAULT_RADIAL
    angular_count: int = DEFAULT_ANGULAR
    radii: np.ndarray = field(init=False, repr=False)
    radial_weights: np.ndarray = field(init=False, repr=False)
    x: np.ndarray = field(init=False, repr=False)
    y: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.radial_count < 1 or self.angular_count < 1:
            raise ValueError("node counts must be at least 1")
        if not self.B > 0:
            raise ValueError("B must be positive")
        t, scaled_w = _laguerre_rule(self.radial_count)
        radii = np.sqrt(t / self.B)
        rw = scaled_w / (2.0 * self.B)
        theta = 2.0 * np.pi * np.arange(self.angular_count) / self.angular_count
        x = np.outer(radii, np.cos(theta))
        y = np.outer(radii, np.sin(theta))
        w = np.outer(rw, np.full(self.angular_count, 2.0 * np.pi / self.angular_count))
        for name, arr in (("radii", radii), ("radial_weights", rw), ("x", x), ("y", y), ("weights", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def radial_nodes(self):
        return list(zip(self.radii.tolist(), self.radial_weights.tolist()))

    @property
    def max_degree(self) -> int:
        """Highest degree in t = B r^2 integrated exactly."""
        return 2 * self.radial_count - 1

    def integrate(self, values) -> complex | float:
        return np.sum(self.weights * values)

    def l2_norm(self, values) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(values) ** 2)))

    def inner(self, f_values, g_values) -> complex:
        """<f, g> = integral of f * conj(g)."""
        return complex(np.sum(self.weights * f_values * np.conj(g_values)))


@lru_cache(maxsize=32)
def default_grid(B: float = 1.0, radial_count: int = DEFAULT_RADIAL,
                 angular_count: int = DEFAULT_ANGULAR) -> QuadratureGrid:
    return QuadratureGrid(float(B), radial_count, angular_count)


# --- eigenfunctions -----------------------------------------------------------


def _prefactor(component: int, j: int, n: int) -> float:
    if component == 1:
        if j > n:
            return 1.0
        return math.sqrt(math.exp(math.lgamma(n + 1) - math.lgamma(n - j + 1)))
    return math.sqrt(math.exp(math.lgamma(j + 1) - math.lgamma(j + n + 1)))


def basis_eval_raw(component: int, xi, params: BasisParams, x, y):
    """Unnormalised eigenfunction e^component_xi at (x, y); arrays broadcast."""
    xi = _as_index(xi)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = params.B * (x * x + y * y)
    gauss = np.exp(-t / 2)
    if component == 1:
        val = (x + 1j * y) ** xi.j * laguerre_eval(xi.n, xi.j, t) * gauss
    elif component == 2:
        val = (x - 1j * y) ** xi.n * laguerre_eval(xi.j, xi.n, t) * gauss
    else:
        raise ValueError(f"component must be 1 or 2, got {component}")
    val = _prefactor(component, xi.j, xi.n) * val
    return val if val.ndim else complex(val)


def _required_degree(xi: SpectralIndex) -> int:
    return 2 * (xi.n + xi.j) + 2


@lru_cache(maxsize=4096)
def _norm_cached(component: int, j: int, n: int, B: float, grid: QuadratureGrid) -> float:
    vals = basis_eval_raw(component, (j, n), BasisParams(B), grid.x, grid.y)
    return grid.l2_norm(vals)


def basis_norm(component: int, xi, params: BasisParams, grid: QuadratureGrid | None = None) -> float:
    """L^2(R^2) norm of :func:`basis_eval_raw` by quadrature."""
    xi = _as_index(xi)
    grid = grid or default_grid(params.B)
    if _required_degree(xi) > grid.max_degree:
        raise QuadratureResolutionError(
            f"index ({xi.j}, {xi.n}) needs radial degree {_required_degree(xi)}, "
            f"grid resolves {grid.max_degree}")
    if 2 * max(xi.j, xi.n) >= grid.angular_count:
        raise QuadratureResolutionError(
            f"index ({xi.j}, {xi.n}) aliases on {grid.angular_count} angular nodes")
    return _norm_cached(component, xi.j, xi.n, float(params.B), grid)


def basis_eval(component: int, xi, params: BasisParams, x, y, grid: QuadratureGrid | None = None):
    """Unit-normalised eigenfunction."""
    grid = grid or default_grid(params.B)
    return basis_eval_raw(component, xi, params, x, y) / basis_norm(component, xi, params, grid)


def apply_hamiltonian_fd(f, params: BasisParams, x, y, h: float):
    """H f by second-order central differences; ``f`` is a callable (x, y) -> complex.

    H f = 1/2 [ -Lap f - 2iB (y f_x - x f_y) + B^2 r^2 f ].
    """
    B = params.B
    f0 = f(x, y)
    fxp, fxm = f(x + h, y), f(x - h, y)
    fyp, fym = f(x, y + h), f(x, y - h)
    lap = (fxp + fxm + fyp + fym - 4.0 * f0) / h**2
    fx = (fxp - fxm) / (2 * h)
    fy = (fyp - fym) / (2 * h)
    return 0.5 * (-lap - 2j * B * (y * fx - x * fy) + B**2 * (x * x + y * y) * f0)


def eigen_residual(component: int, xi, params: BasisParams, grid: QuadratureGrid | None = None,
                   h: float = 1e-3) -> float:
    """Relative residual ||H e - lambda_n e|| / ||e|| with H by finite differences."""
    xi = _as_index(xi)
    grid = grid or default_grid(params.B)

    def f(x, y):
        return basis_eval_raw(component, xi, params, x, y)

    e = f(grid.x, grid.y)
    he = apply_hamiltonian_fd(f, params, grid.x, grid.y, h)
    lam = eigenvalue(xi.n, params)
    return grid.l2_norm(he - lam * e) / grid.l2_norm(e)
