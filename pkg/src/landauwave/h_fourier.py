"""H-Fourier transform on a rectangular truncation of N0^2.

Coefficients are the diagonal entries of the matrix-valued transform; they
are stored as an array of shape ``(2, j_max + 1, n_max + 1)`` indexed by
``[component - 1, j, n]``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .spectral_basis import (
    BasisParams,
    QuadratureGrid,
    QuadratureResolutionError,
    SpectralIndex,
    basis_eval,
    default_grid,
)


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class TruncationSpec:
    j_max: int
    n_max: int
    components: tuple[int, ...] = (1,)

    def __post_init__(self):
        comps = tuple(sorted(set(self.components)))
        if not comps or any(c not in (1, 2) for c in comps):
            raise ValueError(f"components must be a nonempty subset of {{1, 2}}, got {self.components}")
        if self.j_max < 0 or self.n_max < 0:
            raise ValueError("truncation bounds must be nonnegative")
        object.__setattr__(self, "components", comps)

    @property
    def shape(self):
        return (2, self.j_max + 1, self.n_max + 1)

    def indices(self):
        """(component, j, n) in ascending order."""
        for c in self.components:
            for j in range(self.j_max + 1):
                for n in range(self.n_max + 1):
                    yield c, j, n

    def contains(self, component, j, n) -> bool:
        return component in self.components and 0 <= j <= self.j_max and 0 <= n <= self.n_max


@dataclass(frozen=True)
class ModeCoefficient:
    c1: complex = 0j
    c2: complex = 0j


class SpectralField:
    """Immutable map (j, n) -> ModeCoefficient over a truncation."""

    __slots__ = ("trunc", "params", "coeffs")

    def __init__(self, trunc: TruncationSpec, params: BasisParams, coeffs=None):
        arr = np.zeros(trunc.shape, dtype=complex)
        if coeffs is not None:
            coeffs = np.asarray(coeffs, dtype=complex)
            if coeffs.shape != trunc.shape:
                raise ValueError(f"coefficient array has shape {coeffs.shape}, expected {trunc.shape}")
            arr[...] = coeffs
        for c in (1, 2):
            if c not in trunc.components and np.any(arr[c - 1] != 0):
                raise ValueError(f"component {c} is not part of the truncation")
        arr.setflags(write=False)
        object.__setattr__(self, "trunc", trunc)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "coeffs", arr)

    def __setattr__(self, name, value):
        raise AttributeError("SpectralField is immutable")

    @classmethod
    def zeros(cls, trunc, params):
        return cls(trunc, params)

    @classmethod
    def from_entries(cls, trunc, params, entries):
        """``entries``: mapping or iterable of ((component, j, n), value)."""
        arr = np.zeros(trunc.shape, dtype=complex)
        items = entries.items() if hasattr(entries, "items") else entries
        for (c, j, n), val in items:
            if not trunc.contains(c, j, n):
                raise ValueError(f"entry ({c}, {j}, {n}) lies outside the truncation")
            arr[c - 1, j, n] += val
        return cls(trunc, params, arr)

    def __getitem__(self, xi) -> ModeCoefficient:
        if isinstance(xi, SpectralIndex):
            j, n = xi.j, xi.n
        else:
            j, n = xi
        return ModeCoefficient(complex(self.coeffs[0, j, n]), complex(self.coeffs[1, j, n]))

    def entry(self, component, j, n) -> complex:
        return complex(self.coeffs[component - 1, j, n])

    def nonzero_entries(self):
        for c, j, n in self.trunc.indices():
            v = self.coeffs[c - 1, j, n]
            if v != 0:
                yield (c, j, n), complex(v)

    def with_coeffs(self, coeffs) -> SpectralField:
        return SpectralField(self.trunc, self.params, coeffs)

    def __add__(self, other):
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __repr__(self):
        nnz = int(np.count_nonzero(self.coeffs))
        return f"SpectralField(trunc={self.trunc}, B={self.params.B}, nonzero={nnz})"


@dataclass(frozen=True)
class PhysicalField:
    """A function on the plane: a vectorised evaluator or samples on a grid."""

    evaluator: Callable | None = None
    samples: np.ndarray | None = None
    grid: QuadratureGrid | None = None

    def __post_init__(self):
        if (self.evaluator is None) == (self.samples is None):
            raise ValueError("give exactly one of evaluator or samples")
        if self.samples is not None and self.grid is None:
            raise ValueError("samples need the grid they were taken on")

    def on_grid(self, grid: QuadratureGrid):
        if self.samples is not None:
            if grid is not self.grid:
                raise ValueError("samples were taken on a different grid")
            vals = np.asarray(self.samples, dtype=complex)
        else:
            vals = np.asarray(self.evaluator(grid.x, grid.y), dtype=complex) * np.ones(grid.x.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("physical field has non-finite samples")
        return vals


def symbol_weights(trunc: TruncationSpec, params: BasisParams):
    """B + 2 B n broadcast to the coefficient array shape."""
    n = np.arange(trunc.n_max + 1)
    w = params.B * (1.0 + 2.0 * n)
    return np.broadcast_to(w, trunc.shape)


@lru_cache(maxsize=16)
def _basis_stack(trunc: TruncationSpec, B: float, grid: QuadratureGrid):
    params = BasisParams(B)
    stack = np.zeros(trunc.shape + grid.x.shape, dtype=complex)
    for c, j, n in trunc.indices():
        stack[c - 1, j, n] = basis_eval(c, (j, n), params, grid.x, grid.y, grid)
    stack.setflags(write=False)
    return stack


def _check_resolution(trunc: TruncationSpec, grid: QuadratureGrid):
    need = 2 * (trunc.j_max + trunc.n_max) + 2
    if need > grid.max_degree:
        raise QuadratureResolutionError(
            f"truncation needs radial degree {need}, grid resolves {grid.max_degree}")
    if 2 * max(trunc.j_max, trunc.n_max) >= grid.angular_count:
        raise QuadratureResolutionError("truncation aliases on the angular grid")


def forward_transform(f: PhysicalField | Callable, trunc: TruncationSpec, params: BasisParams,
                      grid: QuadratureGrid | None = None) -> SpectralField:
    """Coefficients c_k(xi) = integral of f * conj(e^k_xi)."""
    grid = grid or default_grid(params.B)
    _check_resolution(trunc, grid)
    if not isinstance(f, PhysicalField):
        f = PhysicalField(evaluator=f)
    vals = f.on_grid(grid)
    stack = _basis_stack(trunc, float(params.B), grid)
    coeffs = np.einsum("cjnab,ab->cjn", np.conj(stack), grid.weights * vals)
    mask = np.zeros(trunc.shape, dtype=bool)
    for c in trunc.components:
        mask[c - 1] = True
    return SpectralField(trunc, params, np.where(mask, coeffs, 0))


def inverse_transform(fh: SpectralField, x, y, grid: QuadratureGrid | None = None):
    """Sum of c1 e1_xi + c2 e2_xi over the truncation, ascending index order."""
    grid = grid or default_grid(fh.params.B)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape, dtype=complex)
    for c, j, n in fh.trunc.indices():
        coef = fh.coeffs[c - 1, j, n]
        if coef != 0:
            out = out + coef * basis_eval(c, (j, n), fh.params, x, y, grid)
    return out if out.ndim else complex(out)


def plancherel_norm(fh: SpectralField) -> float:
    return float(np.sqrt(np.sum(np.abs(fh.coeffs) ** 2)))


def sobolev_norm(fh: SpectralField, s: float) -> float:
    w = symbol_weights(fh.trunc, fh.params)
    return float(np.sqrt(np.sum(w**s * np.abs(fh.coeffs) ** 2)))


def hs_apply(fh: SpectralField, s: float) -> SpectralField:
    """Apply H^{s/2} as a Fourier multiplier."""
    if s == 0:
        return fh
    w = symbol_weights(fh.trunc, fh.params)
    return fh.with_coeffs(fh.coeffs * w ** (s / 2))


def decay_profile(fh: SpectralField) -> tuple[float, float]:
    """Fit log(max |c| on shell n) = slope * log<xi> + intercept, <xi> = sqrt(B(2n+1))."""
    mags = np.abs(fh.coeffs).max(axis=(0, 1))
    n = np.arange(fh.trunc.n_max + 1)
    keep = mags > 0
    if keep.sum() < 3:
        raise DegenerateFitError(f"need at least 3 populated shells, got {int(keep.sum())}")
    bracket = np.sqrt(fh.params.B * (2 * n[keep] + 1))
    slope, intercept = np.polyfit(np.log(bracket), np.log(mags[keep]), 1)
    return float(slope), float(intercept)


# --- CSV serialisation ----------------------------------------------------------

CSV_HEADER = ("j", "n", "component", "re", "im")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def field_to_csv(fh: SpectralField) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for (c, j, n), v in fh.nonzero_entries():
        w.writerow((j, n, c, _fmt(v.real), _fmt(v.imag)))
    return buf.getvalue()


def field_from_csv(text: str, trunc: TruncationSpec, params: BasisParams) -> SpectralField:
    rows = csv.DictReader(io.StringIO(text))
    if tuple(rows.fieldnames or ()) != CSV_HEADER:
        raise ValueError(f"expected header {','.join(CSV_HEADER)}")
    entries = [((int(r["component"]), int(r["j"]), int(r["n"])), complex(float(r["re"]), float(r["im"])))
               for r in rows]
    return SpectralField.from_entries(trunc, params, entries)
