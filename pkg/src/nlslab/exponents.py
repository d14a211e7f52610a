"""Exponent algebra for |u|^rho u Schrodinger problems in weak-L^p spaces.

Everything here is a pure function of the dimension ``n`` and the power
``rho``; no fields or grids are involved.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import InadmissibleExponentError, RegimeError

__all__ = [
    "Regime",
    "ProblemParams",
    "ExponentSet",
    "ContractionConstants",
    "compute_exponents",
    "critical_power",
    "beta_integral",
    "contraction_constants",
    "existence_time",
]

# Relative gap below which two sides of a regime inequality count as equal.
_BOUNDARY_RTOL = 64 * 2.220446049250313e-16


class Regime(str, enum.Enum):
    LOCAL = "Local"
    GLOBAL = "Global"
    INADMISSIBLE = "Inadmissible"


@dataclass(frozen=True)
class ProblemParams:
    """Dimension, nonlinearity power and complex coupling of the equation."""

    n: int
    rho: float
    lam: complex = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.n!r}")
        if not self.rho > 0 or not math.isfinite(self.rho):
            raise ValueError(f"rho must be positive and finite, got {self.rho!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "lam", complex(self.lam))


@dataclass(frozen=True)
class ExponentSet:
    n: int
    rho: float
    alpha: float
    beta: float
    delta: float
    rho0: float
    regime: Regime

    @property
    def local_weight(self) -> float:
        """Time weight (alpha - beta)/2 of the local-in-time norm."""
        return self.n * self.rho / (2.0 * (self.rho + 2.0))

    @property
    def global_weight(self) -> float:
        """Time weight alpha/2 of the global-in-time norm."""
        return 1.0 / self.rho - self.n / (2.0 * (self.rho + 2.0))

    @property
    def data_index(self) -> float:
        """Marcinkiewicz index (rho+2)/(rho+1) of the initial data."""
        return (self.rho + 2.0) / (self.rho + 1.0)

    @property
    def solution_index(self) -> float:
        return self.rho + 2.0

    @property
    def dispersive_exponent(self) -> float:
        """Decay exponent of S(t) from L^(p,inf) to L^(p',inf) at p = data_index."""
        return dispersive_exponent(self.n, self.data_index)

    @property
    def stability_bound(self) -> float:
        """Upper end 1 - (alpha/2)(rho+1) of the admissible large-time h range."""
        return 1.0 - self.global_weight * (self.rho + 1.0)


@dataclass(frozen=True)
class ContractionConstants:
    """Measured and derived constants of the contraction argument.

    ``k_combined`` is ``coupling * dispersive_c * product_c * beta_integral``.
    ``radius_r`` is the ball radius R of the fixed-point lemma; in the local
    regime it depends on the horizon ``T``.
    """

    dispersive_c: float
    beta_integral: float
    k_combined: float
    radius_r: float
    product_c: float = 1.0
    coupling: float = 1.0
    horizon: float | None = None

    def __post_init__(self):
        for name in ("dispersive_c", "beta_integral"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        # a vanishing coupling gives K = 0 and an unbounded ball
        if not (self.k_combined >= 0 and math.isfinite(self.k_combined)):
            raise ValueError(f"k_combined must be nonnegative and finite, got {self.k_combined!r}")
        if not self.radius_r > 0 or (math.isinf(self.radius_r) and self.k_combined > 0):
            raise ValueError(f"radius_r must be positive, got {self.radius_r!r}")


def dispersive_exponent(n: int, p: float) -> float:
    """(n/2)(2/p - 1)."""
    return 0.5 * n * (2.0 / p - 1.0)


def critical_power(n: int) -> float:
    """Positive root of n r^2 + (n - 2) r - 4 = 0."""
    b = n - 2.0
    return (-b + math.sqrt(b * b + 16.0 * n)) / (2.0 * n)


def _less(a: float, b: float) -> bool:
    return b - a > _BOUNDARY_RTOL * max(abs(a), abs(b))


def compute_exponents(params: ProblemParams) -> ExponentSet:
    n, rho = params.n, params.rho
    alpha = 2.0 / rho - n / (rho + 2.0)
    beta = 2.0 / rho - n * (rho + 1.0) / (rho + 2.0)
    delta = 1.0 - 0.5 * (alpha - beta) * (rho + 1.0)

    lhs = 0.5 * n * rho
    lower = (rho + 2.0) / (rho + 1.0)
    if _less(lhs, lower):
        regime = Regime.LOCAL
    elif _less(lower, lhs) and _less(lhs, rho + 2.0):
        regime = Regime.GLOBAL
    else:
        regime = Regime.INADMISSIBLE
    return ExponentSet(n, rho, alpha, beta, delta, critical_power(n), regime)


def beta_integral(a: float, b: float) -> float:
    """B(a, b) = int_0^1 (1 - s)^(a-1) s^(b-1) ds via log-Gamma."""
    if not (a > 0 and b > 0):
        raise InadmissibleExponentError(
            f"Beta integral diverges for parameters a={a!r}, b={b!r}"
        )
    return math.exp(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


def duhamel_beta(exps: ExponentSet) -> float:
    """Beta integral bounding the Duhamel term in the regime's weighted norm."""
    a = 1.0 - exps.local_weight
    if exps.regime is Regime.LOCAL:
        b = 1.0 - exps.local_weight * (exps.rho + 1.0)
    elif exps.regime is Regime.GLOBAL:
        b = 1.0 - exps.global_weight * (exps.rho + 1.0)
    else:
        raise RegimeError(f"no contraction estimate for n={exps.n}, rho={exps.rho}")
    return beta_integral(a, b)


def contraction_constants(
    exps: ExponentSet,
    dispersive_c: float,
    product_c: float = 1.0,
    coupling: float = 1.0,
    T: float | None = None,
) -> ContractionConstants:
    """Assemble K and the ball radius R from measured constants.

    In the local regime the radius is computed for horizon ``T`` when given;
    without ``T`` it is reported for T = 1.
    """
    beta = duhamel_beta(exps)
    k = coupling * dispersive_c * product_c * beta
    rho = exps.rho
    factor = 2.0 ** (rho + 1.0) * k
    if exps.regime is Regime.LOCAL:
        factor *= (1.0 if T is None else T) ** exps.delta
    radius = factor ** (-1.0 / rho) if factor > 0 else math.inf
    return ContractionConstants(
        dispersive_c=dispersive_c,
        beta_integral=beta,
        k_combined=k,
        radius_r=radius,
        product_c=product_c,
        coupling=coupling,
        horizon=T,
    )


def existence_time(
    phi_weak_norm: float,
    constants: ContractionConstants,
    exps: ExponentSet,
    theta: float = 0.5,
) -> float:
    """Horizon T at which 2^(rho+1) K T^delta eps^rho equals ``theta``.

    ``eps`` is ``dispersive_c * phi_weak_norm``. The result scales as
    ``phi_weak_norm ** (-rho / delta)``.
    """
    if exps.regime is not Regime.LOCAL:
        raise RegimeError(f"existence time is defined only in the local regime, got {exps.regime.value}")
    if not phi_weak_norm > 0:
        raise ValueError("phi_weak_norm must be positive")
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    rho = exps.rho
    if constants.k_combined == 0:
        return math.inf
    eps = constants.dispersive_c * phi_weak_norm
    return (theta / (2.0 ** (rho + 1.0) * constants.k_combined * eps**rho)) ** (1.0 / exps.delta)
