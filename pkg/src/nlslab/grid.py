"""Uniform truncated grids, complex fields on them, and initial data.

A :class:`Field` stands for a function on R^n that vanishes outside the
box [-L, L)^n. Singular homogeneous data are sampled on *staggered* grids
whose nodes sit at half-integer multiples of the spacing, so the origin is
never a node.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import GridConfigurationError

__all__ = [
    "GridSpec",
    "Field",
    "Gaussian",
    "Indicator",
    "HomogeneousPower",
    "SelfSimilarPower",
    "Bump",
    "sample_datum",
    "rescale_field",
    "nonlinearity",
    "write_field",
    "read_field",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class GridSpec:
    dim: int
    half_width: float
    points_per_axis: int
    staggered: bool = False

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridConfigurationError(f"only 1-D and 2-D grids are supported, got dim={self.dim}")
        n = self.points_per_axis
        if n < 16 or n & (n - 1):
            raise GridConfigurationError(f"points_per_axis must be a power of two >= 16, got {n}")
        if not self.half_width > 0:
            raise GridConfigurationError("half_width must be positive")
        object.__setattr__(self, "half_width", float(self.half_width))
        object.__setattr__(self, "staggered", bool(self.staggered))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """Node coordinates along one axis."""
        offset = 0.5 if self.staggered else 0.0
        k = np.arange(self.points_per_axis)
        return -self.half_width + (k + offset) * self.spacing

    @cached_property
    def radius(self) -> np.ndarray:
        """|x| at every node, shaped like the grid."""
        if self.dim == 1:
            return np.abs(self.axis)
        x, y = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.hypot(x, y)

    def coordinates(self) -> tuple:
        """Broadcastable coordinate arrays, one per axis."""
        if self.dim == 1:
            return (self.axis,)
        return (self.axis[:, None], self.axis[None, :])

    def node_index(self, x: float) -> int | None:
        """Index of the node at coordinate ``x`` along an axis, if it exists."""
        offset = 0.5 if self.staggered else 0.0
        k = (x + self.half_width) / self.spacing - offset
        kr = round(k)
        if abs(k - kr) > 1e-9 or not 0 <= kr < self.points_per_axis:
            return None
        return int(kr)

    def dilated(self, mu: float) -> "GridSpec":
        """Grid whose nodes are ``mu`` times the nodes of this one."""
        return GridSpec(self.dim, self.half_width * mu, self.points_per_axis, self.staggered)

    def box_mask(self, half_width: float) -> np.ndarray:
        """Nodes with max_i |x_i| <= half_width."""
        inside = np.abs(self.axis) <= half_width
        if self.dim == 1:
            return inside
        return inside[:, None] & inside[None, :]


@dataclass(frozen=True, eq=False)
class Field:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise GridConfigurationError(
                f"field shape {values.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume))

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.values))

    def _check(self, other: "Field"):
        if other.grid != self.grid:
            raise GridConfigurationError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values - other.values)
        return NotImplemented

    def __mul__(self, scalar):
        if isinstance(scalar, Field):
            return NotImplemented
        return Field(self.grid, self.values * complex(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)


# --- initial data ---------------------------------------------------------


@dataclass(frozen=True)
class Gaussian:
    """``amplitude * exp(-|x|^2 / width^2)``."""

    amplitude: complex = 1.0
    width: float = 1.0

    singular = False


@dataclass(frozen=True)
class Indicator:
    """``amplitude`` on the closed ball of given radius, zero elsewhere."""

    amplitude: complex = 1.0
    radius: float = 1.0

    singular = False


@dataclass(frozen=True)
class Bump:
    """Smooth compactly supported ``amplitude * exp(1 - 1/(1 - |x/radius|^2))``."""

    amplitude: complex = 1.0
    radius: float = 1.0

    singular = False


@dataclass(frozen=True)
class HomogeneousPower:
    """``P_k(x) |x|^(-k-a)`` with ``P_k`` a homogeneous polynomial of degree k.

    ``coefficients`` maps exponent multi-indices (one entry per axis, summing
    to ``degree``) to complex coefficients. The datum is homogeneous of
    degree ``-exponent``.
    """

    coefficients: Mapping[tuple, complex] = dc_field(default_factory=lambda: {(0,): 1.0})
    degree: int = 0
    exponent: float = 0.5

    @property
    def singular(self) -> bool:
        return self.exponent > 0 or (self.exponent == 0 and self.degree > 0)

    def __post_init__(self):
        coeffs = {tuple(int(i) for i in k): complex(v) for k, v in dict(self.coefficients).items()}
        for key in coeffs:
            if sum(key) != self.degree or min(key) < 0:
                raise ValueError(f"multi-index {key} is not of total degree {self.degree}")
        object.__setattr__(self, "coefficients", coeffs)

    def __hash__(self):
        return hash((tuple(sorted(self.coefficients.items(), key=lambda kv: kv[0])), self.degree, self.exponent))

    def polynomial(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        total = 0.0
        for key, c in self.coefficients.items():
            if len(key) != len(coords):
                raise GridConfigurationError(
                    f"multi-index {key} does not match grid dimension {len(coords)}"
                )
            term = c
            for x, power in zip(coords, key):
                term = term * x**power
            total = total + term
        return total


@dataclass(frozen=True)
class SelfSimilarPower:
    """``amplitude * |x|^(-2/rho)``, homogeneous of degree -2/rho."""

    amplitude: complex = 1.0

    singular = True

    def as_homogeneous(self, dim: int, rho: float) -> HomogeneousPower:
        return HomogeneousPower({(0,) * dim: self.amplitude}, 0, 2.0 / rho)


DatumSpec = Union[Gaussian, Indicator, Bump, HomogeneousPower, SelfSimilarPower]


def _gauss_legendre_cell_average(func, grid: GridSpec, order: int = 6) -> np.ndarray:
    """Cell averages of ``func`` by a tensor Gauss-Legendre rule in each cell."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    h = grid.spacing
    axis = grid.axis
    out = np.zeros(grid.shape, dtype=complex)
    if grid.dim == 1:
        for s, w in zip(nodes, weights):
            out += 0.5 * w * func((axis + 0.5 * s * h,))
        return out
    for s1, w1 in zip(nodes, weights):
        for s2, w2 in zip(nodes, weights):
            x = (axis + 0.5 * s1 * h)[:, None]
            y = (axis + 0.5 * s2 * h)[None, :]
            out += 0.25 * w1 * w2 * func((x, y))
    return out


def _homogeneous_cell_average(datum: HomogeneousPower, grid: GridSpec) -> np.ndarray:
    a, k = datum.exponent, datum.degree
    if a >= grid.dim:
        raise GridConfigurationError(
            f"|x|^(-{a}) is not locally integrable in dimension {grid.dim}; cell averages diverge"
        )
    h = grid.spacing

    def func(coords):
        r = np.sqrt(sum(c * c for c in coords))
        return datum.polynomial(coords) * r ** (-k - a)

    out = _gauss_legendre_cell_average(func, grid)
    n = grid.points_per_axis
    mid = n // 2
    if grid.dim == 1:
        # cells [0, h] and [-h, 0] integrated exactly
        c = sum(datum.coefficients.values())
        mass = h ** (1.0 - a) / (1.0 - a)
        out[mid] = c * mass / h
        out[mid - 1] = c * (-1.0) ** k * mass / h
        return out

    # Corner-singular cells: split into two triangles, x = h u, y = h u v, so
    # the radial factor integrates exactly and the angular one by Gauss-Legendre.
    nodes, weights = np.polynomial.legendre.leggauss(24)
    v = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    radial = h ** (2.0 - a) / (2.0 - a)
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            # triangle |y| <= |x|: (x, y) = h u (sx, sy v); other one swaps roles
            ang1 = datum.polynomial((sx * np.ones_like(v), sy * v)) * (1.0 + v * v) ** (-(k + a) / 2)
            ang2 = datum.polynomial((sx * v, sy * np.ones_like(v))) * (1.0 + v * v) ** (-(k + a) / 2)
            total = radial * (np.sum(w * ang1) + np.sum(w * ang2))
            i = mid if sx > 0 else mid - 1
            j = mid if sy > 0 else mid - 1
            out[i, j] = total / (h * h)
    return out


def sample_datum(
    spec: DatumSpec,
    grid: GridSpec,
    rho: float | None = None,
    cell_average: bool = False,
) -> Field:
    """Sample an initial datum on ``grid``.

    Values are pointwise evaluations at the nodes. With ``cell_average=True``
    singular data are replaced by exact cell averages near the origin and
    Gauss-Legendre cell averages elsewhere, which keeps the mass carried by
    the singularity; a pointwise sampling of |x|^(-a) misses a mass of order
    h^(n-a) that does not vanish quickly.
    """
    if isinstance(spec, SelfSimilarPower):
        if rho is None:
            raise ValueError("SelfSimilarPower needs the nonlinearity power rho")
        spec = spec.as_homogeneous(grid.dim, rho)
    if getattr(spec, "singular", False) and not grid.staggered:
        raise GridConfigurationError(
            f"{type(spec).__name__} is singular at the origin and needs a staggered grid"
        )

    coords = grid.coordinates()
    r = grid.radius
    if isinstance(spec, Gaussian):
        values = spec.amplitude * np.exp(-(r**2) / spec.width**2)
    elif isinstance(spec, Indicator):
        values = np.where(r <= spec.radius, complex(spec.amplitude), 0.0)
    elif isinstance(spec, Bump):
        s = (r / spec.radius) ** 2
        inside = s < 1.0
        values = np.zeros(grid.shape, dtype=complex)
        values[inside] = spec.amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside]))
    elif isinstance(spec, HomogeneousPower):
        if cell_average and spec.singular:
            values = _homogeneous_cell_average(spec, grid)
        else:
            values = spec.polynomial(coords) * r ** (-spec.degree - spec.exponent)
    else:
        raise TypeError(f"unknown datum specification {spec!r}")
    return Field(grid, np.broadcast_to(values, grid.shape).astype(complex))


def _trig_interp_axis(values: np.ndarray, grid: GridSpec, points: np.ndarray, axis: int) -> np.ndarray:
    """Evaluate the trigonometric interpolant along ``axis`` at ``points``."""
    n = grid.points_per_axis
    coeffs = np.fft.fft(values, axis=axis) / n
    freqs = np.fft.fftfreq(n, d=grid.spacing) * 2.0 * np.pi
    # split the Nyquist mode evenly so real data interpolate to real values
    nyq = n // 2
    coeffs = np.moveaxis(coeffs, axis, -1)
    extra = 0.5 * coeffs[..., nyq : nyq + 1]
    coeffs = coeffs.copy()
    coeffs[..., nyq] *= 0.5
    coeffs = np.concatenate([coeffs, extra], axis=-1)
    freqs = np.concatenate([freqs, [-freqs[nyq]]])
    shift = points - grid.axis[0]
    out = np.empty(coeffs.shape[:-1] + (points.size,), dtype=complex)
    chunk = max(1, 2**22 // (n + 1))
    for start in range(0, points.size, chunk):
        sl = slice(start, start + chunk)
        basis = np.exp(1j * np.outer(freqs, shift[sl]))
        out[..., sl] = coeffs @ basis
    return np.moveaxis(out, -1, axis)


def rescale_field(f: Field, mu: float) -> Field:
    """The field x -> f(mu x) on the same grid.

    Points mu*x that leave the box read the value zero. When every image
    point that stays inside is a node (mu a power of two on an unstaggered
    grid with mu >= 1) the values are copied; otherwise they come from the
    band-limited interpolant.
    """
    if not mu > 0:
        raise ValueError(f"scale factor must be positive, got {mu!r}")
    grid = f.grid
    if mu == 1:
        return f
    target = mu * grid.axis
    inside = (target >= -grid.half_width) & (target < grid.half_width)
    idx = [grid.node_index(x) if ok else None for x, ok in zip(target, inside)]
    exact = all(i is not None for i, ok in zip(idx, inside) if ok)

    values = f.values
    if exact:
        take = np.array([i if i is not None else 0 for i in idx])
        out = values
        for axis in range(grid.dim):
            out = np.take(out, take, axis=axis)
            mask_shape = [1] * grid.dim
            mask_shape[axis] = -1
            out = out * inside.reshape(mask_shape)
        return Field(grid, out)

    out = values
    for axis in range(grid.dim):
        out = _trig_interp_axis(out, grid, target, axis)
        mask_shape = [1] * grid.dim
        mask_shape[axis] = -1
        out = out * inside.reshape(mask_shape)
    return Field(grid, out)


def nonlinearity(f: Field, rho: float, lam: complex) -> Field:
    """Pointwise lam |f|^rho f."""
    values = f.values
    return Field(f.grid, lam * np.abs(values) ** rho * values)


# --- serialization --------------------------------------------------------

_HEADER = struct.Struct("<iidB")


def _encode(f: Field) -> bytes:
    g = f.grid
    head = _HEADER.pack(g.dim, g.points_per_axis, g.half_width, int(g.staggered))
    pairs = np.empty(f.values.shape + (2,), dtype="<f8")
    pairs[..., 0] = f.values.real
    pairs[..., 1] = f.values.imag
    return head + pairs.tobytes(order="C")


def _decode(buf: bytes, offset: int = 0) -> tuple[Field, int]:
    dim, n, half_width, staggered = _HEADER.unpack_from(buf, offset)
    grid = GridSpec(dim, half_width, n, bool(staggered))
    offset += _HEADER.size
    count = grid.size * 2
    pairs = np.frombuffer(buf, dtype="<f8", count=count, offset=offset)
    values = (pairs[0::2] + 1j * pairs[1::2]).reshape(grid.shape)
    return Field(grid, values), offset + 8 * count


def write_field(f: Field, path) -> None:
    """Binary layout: int32 dim, int32 N, float64 L, uint8 staggered, then
    row-major (re, im) float64 pairs, all little-endian."""
    Path(path).write_bytes(_encode(f))


def read_field(path) -> Field:
    return _decode(Path(path).read_bytes())[0]


def write_field_csv(f: Field, path) -> None:
    g = f.grid
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dim", "N", "L", "staggered"])
    w.writerow([g.dim, g.points_per_axis, repr(g.half_width), int(g.staggered)])
    w.writerow(["re", "im"])
    for z in f.values.ravel(order="C"):
        w.writerow([format(z.real, ".17g"), format(z.imag, ".17g")])
    Path(path).write_text(buf.getvalue())


def read_field_csv(path) -> Field:
    rows = list(csv.reader(io.StringIO(Path(path).read_text())))
    dim, n, half_width, staggered = rows[1]
    grid = GridSpec(int(dim), float(half_width), int(n), bool(int(staggered)))
    data = np.array([[float(a), float(b)] for a, b in rows[3:]])
    return Field(grid, (data[:, 0] + 1j * data[:, 1]).reshape(grid.shape))
