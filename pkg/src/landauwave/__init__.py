"""Spectral solver for wave equations driven by the 2D Landau Hamiltonian."""
from __future__ import annotations

__version__ = "0.1.0"
