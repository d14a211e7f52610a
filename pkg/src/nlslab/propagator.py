"""The free Schrodinger group S(t) = exp(i t Laplacian) on a truncated grid.

:func:`free_evolve` applies the Fourier multiplier exp(-i |xi|^2 t) on the
periodic grid. :func:`kernel_evolve` sums the Fresnel kernel directly over
the box and serves as an independent, non-periodic cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, cached_property

import numpy as np
import scipy.fft as sfft

from .errors import LorentzIndexError, SingularKernelError
from .grid import Field, GridSpec
from .lorentz import weak_norm

__all__ = [
    "PropagatorPlan",
    "plan_for",
    "free_evolve",
    "kernel_evolve",
    "dispersive_ratio",
    "outside_mass_fraction",
]


@dataclass(frozen=True)
class PropagatorPlan:
    grid: GridSpec

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Angular frequencies along one axis; spacing pi / L."""
        g = self.grid
        return 2.0 * np.pi * np.fft.fftfreq(g.points_per_axis, d=g.spacing)

    @cached_property
    def symbol(self) -> np.ndarray:
        """|xi|^2 on the frequency lattice, shaped like the grid."""
        k2 = self.frequencies**2
        if self.grid.dim == 1:
            return k2
        return k2[:, None] + k2[None, :]

    def forward(self, values: np.ndarray) -> np.ndarray:
        return sfft.fftn(values, axes=self._axes(values))

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.ifftn(coeffs, axes=self._axes(coeffs))

    def _axes(self, arr):
        return tuple(range(arr.ndim - self.grid.dim, arr.ndim))

    def multiplier(self, t: float) -> np.ndarray:
        """exp(-i |xi|^2 t); built per axis since the symbol is separable."""
        m1 = np.exp(-1j * self.frequencies**2 * t)
        if self.grid.dim == 1:
            return m1
        return m1[:, None] * m1[None, :]

    def evolve_values(self, values: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return np.array(values, dtype=complex)
        if t < 0:
            return np.conj(self.evolve_values(np.conj(values), -t))
        return self.inverse(self.multiplier(t) * self.forward(values))

    def evolve_coefficients(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        """S(t) applied to data given by its forward transform, t >= 0."""
        return self.inverse(self.multiplier(t) * coeffs)


@lru_cache(maxsize=32)
def plan_for(grid: GridSpec) -> PropagatorPlan:
    return PropagatorPlan(grid)


def free_evolve(f: Field, t: float) -> Field:
    """S(t) f by the spectral multiplier; negative t via S(-t) = conj S(t) conj."""
    return Field(f.grid, plan_for(f.grid).evolve_values(f.values, float(t)))


def _kernel(t: float, dim: int, sq_dist: np.ndarray) -> np.ndarray:
    prefactor = (4j * np.pi * t) ** (-dim / 2.0)
    return prefactor * np.exp(1j * sq_dist / (4.0 * t))


def kernel_evolve(f: Field, t: float) -> Field:
    """Direct midpoint-rule convolution with K_t(x) = (4 pi i t)^(-n/2) e^{i|x|^2/4t}.

    Data outside the box are taken to be zero (free space, no periodic images).
    Cost is O(N^2) in 1-D and O(N^4) in 2-D; meant for small grids.
    """
    t = float(t)
    if t == 0:
        raise SingularKernelError("the Fresnel kernel is singular at t = 0")
    if t < 0:
        return kernel_evolve(f.conj(), -t).conj()
    g = f.grid
    x = g.axis
    h = g.cell_volume
    values = f.values
    if g.dim == 1:
        out = np.empty(g.points_per_axis, dtype=complex)
        chunk = max(1, 2**22 // g.points_per_axis)
        for start in range(0, x.size, chunk):
            xs = x[start : start + chunk]
            k = _kernel(t, 1, (xs[:, None] - x[None, :]) ** 2)
            out[start : start + chunk] = h * (k @ values)
        return Field(g, out)
    # 2-D: the kernel factorizes, so apply the 1-D sum along each axis.
    k1 = _kernel(t, 1, (x[:, None] - x[None, :]) ** 2) * g.spacing
    return Field(g, k1 @ values @ k1.T)


def dispersive_ratio(f: Field, t: float, p: float) -> float:
    """||S(t) f||_(p', inf) / ||f||_(p, inf) with 1/p + 1/p' = 1, for 1 < p < 2."""
    if not 1 < p < 2:
        raise LorentzIndexError(f"dispersive ratio needs 1 < p < 2, got {p}")
    if t == 0:
        raise SingularKernelError("dispersive ratio is defined for t != 0")
    p_dual = p / (p - 1.0)
    return weak_norm(free_evolve(f, t), p_dual) / weak_norm(f, p)


def outside_mass_fraction(f: Field, fraction: float = 0.5) -> float:
    """Share of the squared L^2 mass lying outside the box max|x_i| <= fraction * L."""
    dens = np.abs(f.values) ** 2
    total = dens.sum()
    if total == 0:
        return 0.0
    inside = dens[f.grid.box_mask(fraction * f.grid.half_width)].sum()
    return float((total - inside) / total)
