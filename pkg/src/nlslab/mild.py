"""Mild solutions u = S(t)phi + B(u) by Picard iteration on a graded time mesh.

The Duhamel term B(u)(t) = -i lam int_0^t S(t-s) N(u(s)) ds is evaluated in
Fourier space by an exponential product-trapezoid recursion: on each mesh
interval N is interpolated linearly and the free phase e^{-i|xi|^2 (t-s)} is
integrated exactly. The first interval [0, t_1] uses the value at t_1 only,
so N is never evaluated at t = 0 where singular data blow up.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import HypothesisError, MeshError, NonConvergenceError, RegimeError
from .exponents import (
    ContractionConstants,
    ExponentSet,
    ProblemParams,
    Regime,
    compute_exponents,
    contraction_constants,
)
from .grid import Field, Gaussian, GridSpec, _decode, _encode, sample_datum
from .lorentz import weak_norm
from .propagator import plan_for

__all__ = [
    "NormMode",
    "TimeMesh",
    "Trajectory",
    "ConvergenceReport",
    "default_grading",
    "linear_trajectory",
    "weighted_norm",
    "duhamel_all",
    "duhamel_integral",
    "picard_solve",
    "residual",
    "product_ratio",
    "measure_constants",
    "save_trajectory",
    "load_trajectory",
]


class NormMode(str, enum.Enum):
    LOCAL_AB = "LocalAB"
    GLOBAL_A = "GlobalA"

    def weight(self, exps: ExponentSet) -> float:
        return exps.local_weight if self is NormMode.LOCAL_AB else exps.global_weight

    @property
    def regime(self) -> Regime:
        return Regime.LOCAL if self is NormMode.LOCAL_AB else Regime.GLOBAL


def default_grading(exps: ExponentSet) -> float:
    """max(2, 1/delta) when delta > 0, else 2."""
    if exps.delta > 0:
        return max(2.0, 1.0 / exps.delta)
    return 2.0


@dataclass(frozen=True)
class TimeMesh:
    """Nodes t_j = T (j/M)^grading, j = 1..M."""

    T: float
    M: int
    grading: float = 2.0

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise MeshError(f"horizon must be positive and finite, got {self.T!r}")
        if int(self.M) != self.M or self.M < 1:
            raise MeshError(f"mesh needs at least one node, got M={self.M!r}")
        if not self.grading >= 1:
            raise MeshError(f"grading exponent must be >= 1, got {self.grading!r}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "grading", float(self.grading))

    @cached_property
    def nodes(self) -> np.ndarray:
        j = np.arange(1, self.M + 1, dtype=float)
        t = self.T * (j / self.M) ** self.grading
        t[-1] = self.T
        t.flags.writeable = False
        return t

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes, prepend=0.0)

    def index_of(self, t: float, rtol: float = 1e-12) -> int:
        nodes = self.nodes
        j = int(np.argmin(np.abs(nodes - t)))
        if abs(nodes[j] - t) > rtol * max(abs(t), nodes[0]):
            raise MeshError(f"t={t!r} is not a node of the mesh")
        return j

    def scaled(self, factor: float) -> "TimeMesh":
        return TimeMesh(self.T * factor, self.M, self.grading)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Fields at every mesh node, stored as one array of shape (M, *grid.shape)."""

    mesh: TimeMesh
    grid: GridSpec
    values: np.ndarray
    exps: ExponentSet

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        if values.shape != (self.mesh.M,) + self.grid.shape:
            raise ValueError(
                f"trajectory shape {values.shape} does not match mesh and grid {(self.mesh.M,) + self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("trajectory values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.mesh.M

    def field(self, j: int) -> Field:
        return Field(self.grid, self.values[j])

    @property
    def fields(self) -> list[Field]:
        return [self.field(j) for j in range(self.mesh.M)]

    def at(self, t: float) -> Field:
        return self.field(self.mesh.index_of(t))

    @cached_property
    def node_norms(self) -> np.ndarray:
        """||u(t_j)||_(rho+2, inf) for every node."""
        p = self.exps.solution_index
        grid = self.grid
        return np.array([weak_norm(Field(grid, v), p) for v in self.values])

    def with_values(self, values) -> "Trajectory":
        return Trajectory(self.mesh, self.grid, values, self.exps)

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        return self.with_values(self.values - other.values)


@dataclass
class ConvergenceReport:
    iterates: int = 0
    diffs: list = dc_field(default_factory=list)
    contraction_ratios: list = dc_field(default_factory=list)
    residual: float = math.nan
    ball_radius: float = math.nan
    epsilon: float = math.nan
    converged: bool = False
    product_constant: float = math.nan

    def to_dict(self) -> dict:
        return {
            "iterates": self.iterates,
            "diffs": [float(d) for d in self.diffs],
            "contraction_ratios": [float(r) for r in self.contraction_ratios],
            "residual": float(self.residual),
            "ball_radius": float(self.ball_radius),
            "epsilon": float(self.epsilon),
            "converged": self.converged,
            "product_constant": float(self.product_constant),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _weights(mesh: TimeMesh, mode: NormMode, exps: ExponentSet) -> np.ndarray:
    return mesh.nodes ** mode.weight(exps)


def weighted_norm(traj: Trajectory, mode: NormMode | str) -> float:
    """Sup over mesh nodes of t^w ||u(t)||_(rho+2, inf).

    A lower bound for the sup over (0, T]; it converges to it under mesh
    refinement for continuous trajectories.
    """
    mode = NormMode(mode)
    if len(traj) == 0:
        return 0.0
    return float(np.max(_weights(traj.mesh, mode, traj.exps) * traj.node_norms))


def linear_trajectory(phi: Field, mesh: TimeMesh, exps: ExponentSet) -> Trajectory:
    """t_j -> S(t_j) phi, from a single forward transform."""
    plan = plan_for(phi.grid)
    coeffs = plan.forward(phi.values)
    out = np.empty((mesh.M,) + phi.grid.shape, dtype=complex)
    for j, t in enumerate(mesh.nodes):
        out[j] = plan.evolve_coefficients(coeffs, t)
    return Trajectory(mesh, phi.grid, out, exps)


def _phi_functions(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """phi1 = (e^z - 1)/z and phi2 = (e^z - 1 - z)/z^2, series near z = 0."""
    phi1 = np.empty_like(z)
    phi2 = np.empty_like(z)
    small = np.abs(z) < 0.1
    zs = z[small]
    # Taylor: phi1 = sum z^k/(k+1)!, phi2 = sum z^k/(k+2)!
    s1 = np.zeros_like(zs)
    s2 = np.zeros_like(zs)
    term = np.ones_like(zs)
    for k in range(12):
        s1 += term / math.factorial(k + 1)
        s2 += term / math.factorial(k + 2)
        term = term * zs
    phi1[small] = s1
    phi2[small] = s2
    zb = z[~small]
    em1 = np.expm1(zb)
    phi1[~small] = em1 / zb
    phi2[~small] = (em1 - zb) / (zb * zb)
    return phi1, phi2


def _duhamel_values(values: np.ndarray, steps: np.ndarray, grid: GridSpec, lam: complex, rho: float) -> np.ndarray:
    """B(u)(t_j) for all j from nodal values of u and the mesh steps t_j - t_{j-1}."""
    out = np.zeros_like(values, dtype=complex)
    if lam == 0:
        return out
    plan = plan_for(grid)
    omega = plan.symbol
    nonlin = np.abs(values) ** rho * values
    n_hat = plan.forward(nonlin)
    acc = np.zeros(grid.shape, dtype=complex)
    for j, h in enumerate(steps):
        z = -1j * omega * h
        phi1, phi2 = _phi_functions(z)
        if j == 0:
            acc = h * phi1 * n_hat[0]
        else:
            acc = np.exp(z) * acc + h * (phi2 * n_hat[j] + (phi1 - phi2) * n_hat[j - 1])
        out[j] = acc
    return -1j * lam * plan.inverse(out)


def duhamel_all(traj: Trajectory, lam: complex, rho: float) -> Trajectory:
    return traj.with_values(_duhamel_values(traj.values, traj.mesh.steps, traj.grid, complex(lam), rho))


def duhamel_integral(traj: Trajectory, t: float, lam: complex, rho: float) -> Field:
    """B(u)(t) at a mesh node t; only nodes up to t are used."""
    j = traj.mesh.index_of(t)
    vals = _duhamel_values(traj.values[: j + 1], traj.mesh.steps[: j + 1], traj.grid, complex(lam), rho)
    return Field(traj.grid, vals[j])


def residual(traj: Trajectory, phi: Field, params: ProblemParams, mode: NormMode | str) -> float:
    """Weighted norm of u - S(t)phi - B(u) over the mesh."""
    lin = linear_trajectory(phi, traj.mesh, traj.exps)
    duh = duhamel_all(traj, params.lam, params.rho)
    return weighted_norm(traj.with_values(traj.values - lin.values - duh.values), mode)


def product_ratio(u: Field, v: Field, rho: float) -> float:
    """||N(u) - N(v)||_(p,inf) / (||u - v||_(rho+2,inf) (||u||^rho + ||v||^rho)), N(f) = |f|^rho f.

    ``p`` is (rho+2)/(rho+1). Returns 0 when u = v.
    """
    p_data = (rho + 2.0) / (rho + 1.0)
    p_sol = rho + 2.0
    diff = u - v
    dn = weak_norm(diff, p_sol)
    if dn == 0:
        return 0.0
    nu = np.abs(u.values) ** rho * u.values
    nv = np.abs(v.values) ** rho * v.values
    top = weak_norm(Field(u.grid, nu - nv), p_data)
    return top / (dn * (weak_norm(u, p_sol) ** rho + weak_norm(v, p_sol) ** rho))


def measure_constants(
    phi: Field,
    exps: ExponentSet,
    mesh: TimeMesh,
    lam: complex = 1.0,
    widths: Sequence[float] | None = None,
    T: float | None = None,
) -> ContractionConstants:
    """Empirical contraction constants for the data and mesh at hand.

    The dispersive constant is the largest value of
    t^{(alpha-beta)/2} ||S(t) g||_(rho+2,inf) / ||g||_((rho+2)/(rho+1),inf)
    over mesh nodes and a battery g = phi plus Gaussians of several widths.
    The product constant is the largest :func:`product_ratio` over pairs
    built from S(t_j) phi.
    """
    grid = phi.grid
    rho = exps.rho
    p_data, p_sol = exps.data_index, exps.solution_index
    w = exps.local_weight
    if widths is None:
        widths = [grid.half_width / 64.0 * 2.0**k for k in range(4)]
    battery = [sample_datum(Gaussian(1.0, wd), grid) for wd in widths if wd > 2 * grid.spacing]
    nodes = mesh.nodes
    picks = np.unique(np.linspace(0, mesh.M - 1, min(mesh.M, 24)).astype(int))

    def sup_ratio(g, js):
        base = weak_norm(g, p_data)
        if base == 0:
            return 0.0
        lin = linear_trajectory(g, mesh, exps)
        return max(nodes[j] ** w * weak_norm(lin.field(j), p_sol) / base for j in js)

    # every node for phi itself, a subsample for the auxiliary battery
    c_disp = sup_ratio(phi, range(mesh.M))
    for g in battery:
        c_disp = max(c_disp, sup_ratio(g, picks))

    lin = linear_trajectory(phi, mesh, exps)
    c_prod = 0.0
    for j in picks:
        u = lin.field(j)
        for v in (u * 0.0, u * 0.5, -u, u * 1j):
            c_prod = max(c_prod, product_ratio(u, v, rho))
    return contraction_constants(exps, float(c_disp), float(c_prod), abs(complex(lam)), T)


def _check_mode(exps: ExponentSet, mode: NormMode):
    if exps.regime is not mode.regime:
        raise RegimeError(
            f"{mode.value} norm needs the {mode.regime.value} regime; (n={exps.n}, rho={exps.rho}) is {exps.regime.value}"
        )


def picard_solve(
    phi: Field,
    params: ProblemParams,
    mesh: TimeMesh,
    mode: NormMode | str,
    tol: float = 1e-10,
    max_iter: int = 100,
    initial: str = "linear",
    constants: ContractionConstants | None = None,
    check_ball: bool | None = None,
    track_product: bool = False,
    check_regime: bool = True,
) -> tuple[Trajectory, ConvergenceReport]:
    """Iterate u <- S(t)phi + B(u) until the weighted-norm step drops below ``tol``.

    ``initial`` selects u^0: ``"linear"`` (S(t)phi) or ``"zero"``. In the
    global mode the smallness of eps = sup t^{alpha/2} ||S(t)phi|| against
    the ball radius R is always verified (constants are measured when not
    supplied); in the local mode only when ``check_ball`` is true.
    """
    mode = NormMode(mode)
    exps = compute_exponents(params)
    if check_regime:
        _check_mode(exps, mode)
    if check_ball is None:
        check_ball = mode is NormMode.GLOBAL_A

    lin = linear_trajectory(phi, mesh, exps)
    report = ConvergenceReport()
    eps = weighted_norm(lin, mode)
    report.epsilon = eps
    report.ball_radius = 2.0 * eps
    if check_ball and params.lam != 0:
        if constants is None:
            constants = measure_constants(phi, exps, mesh, params.lam, T=mesh.T)
        if not eps < constants.radius_r:
            raise HypothesisError(
                f"data are not small enough: eps={eps:.6g} is not below the ball radius R={constants.radius_r:.6g}"
            )

    if initial == "linear":
        current = lin.values
    elif initial == "zero":
        current = np.zeros_like(lin.values)
    else:
        raise ValueError(f"initial iterate must be 'linear' or 'zero', got {initial!r}")

    weights = _weights(mesh, mode, exps)
    p_sol = exps.solution_index
    grid = phi.grid
    prod_c = 0.0

    def wnorm(vals):
        return float(np.max(weights * np.array([weak_norm(Field(grid, v), p_sol) for v in vals])))

    for k in range(max_iter):
        nxt = lin.values + _duhamel_values(current, mesh.steps, grid, params.lam, params.rho)
        if track_product:
            for j in range(mesh.M):
                prod_c = max(prod_c, product_ratio(Field(grid, nxt[j]), Field(grid, current[j]), params.rho))
        diff = wnorm(nxt - current)
        report.diffs.append(diff)
        if len(report.diffs) > 1 and report.diffs[-2] > 0:
            report.contraction_ratios.append(diff / report.diffs[-2])
        report.iterates = k + 1
        current = nxt
        if not np.all(np.isfinite(current)):
            break
        if diff < tol:
            report.converged = True
            break

    if track_product:
        report.product_constant = prod_c
    if not report.converged:
        raise NonConvergenceError(
            f"Picard iteration did not reach tol={tol:g} in {report.iterates} iterations "
            f"(last step {report.diffs[-1] if report.diffs else math.nan:.3g})",
            report,
        )
    traj = Trajectory(mesh, grid, current, exps)
    report.residual = residual(traj, phi, params, mode)
    return traj, report


# --- checkpoints ----------------------------------------------------------

_MAGIC = b"NLSTRAJ1"
_MESH = struct.Struct("<ddidd")


def save_trajectory(traj: Trajectory, path) -> None:
    """Mesh header (T, grading, M, n-as-float, rho) then one Field record per node."""
    m = traj.mesh
    parts = [_MAGIC, _MESH.pack(m.T, m.grading, m.M, float(traj.exps.n), traj.exps.rho)]
    parts.extend(_encode(traj.field(j)) for j in range(m.M))
    Path(path).write_bytes(b"".join(parts))


def load_trajectory(path) -> Trajectory:
    buf = Path(path).read_bytes()
    if not buf.startswith(_MAGIC):
        raise ValueError(f"{path} is not a trajectory checkpoint")
    T, grading, M, n, rho = _MESH.unpack_from(buf, len(_MAGIC))
    offset = len(_MAGIC) + _MESH.size
    fields = []
    for _ in range(M):
        f, offset = _decode(buf, offset)
        fields.append(f.values)
    mesh = TimeMesh(T, M, grading)
    exps = compute_exponents(ProblemParams(int(n), rho))
    return Trajectory(mesh, f.grid, np.stack(fields), exps)
