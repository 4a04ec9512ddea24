"""Sampled complex response on a uniform frequency grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = ["ComplexSpectrum", "CONVENTIONS"]

#: ``physics``: time dependence e^{-i w t}, resonances as 1/(k/2 - i d).
#: ``engineering``: e^{+j w t}, as produced by impedance-based circuit models.
CONVENTIONS = ("physics", "engineering")


@dataclass(frozen=True)
class ComplexSpectrum:
    """Complex response values on a strictly increasing uniform grid.

    Parameters
    ----------
    grid : ndarray
        Angular frequency or detuning in rad/s.
    values : ndarray of complex
    convention : {"physics", "engineering"}
        Sign of the time dependence the values refer to.
    label : str
    metadata : dict
    """

    grid: np.ndarray
    values: np.ndarray
    convention: str = "physics"
    label: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if g.ndim != 1 or g.size < 3:
            raise ConfigError("spectrum grid must be 1-D with at least 3 points")
        if v.shape != g.shape:
            raise ConfigError("spectrum values and grid differ in shape")
        if self.convention not in CONVENTIONS:
            raise ConfigError(f"unknown convention {self.convention!r}")
        d = np.diff(g)
        if np.any(d <= 0):
            raise ConfigError("spectrum grid must be strictly increasing")
        step = (g[-1] - g[0]) / (g.size - 1)
        if np.max(np.abs(d - step)) > 1e-12 * max(np.max(np.abs(g)), step):
            raise ConfigError("spectrum grid is not uniform")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @property
    def step(self) -> float:
        return float((self.grid[-1] - self.grid[0]) / (self.grid.size - 1))

    def as_physics(self) -> np.ndarray:
        """Values expressed in the physics (e^{-i w t}) convention."""
        return self.values if self.convention == "physics" else np.conj(self.values)

    def __len__(self):
        return self.grid.size
