"""Decreasing rearrangements and Lorentz norms of sampled fields.

A sampled field is a step function with cells of equal volume, so its
decreasing rearrangement f* is a finite step function and every Lorentz
norm built on the maximal average f**(t) = (1/t) int_0^t f* can be
evaluated piece by piece in closed form.

The norm uses the f**-based convention with the ``p/q`` prefactor::

    ||f||_(p,q) = ( p/q int_0^inf [t^(1/p) f**(t)]^q dt/t )^(1/q)
    ||f||_(p,inf) = sup_t t^(1/p) f**(t)
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import LorentzIndexError
from .grid import Field

__all__ = [
    "LorentzIndex",
    "StepRearrangement",
    "decreasing_rearrangement",
    "lorentz_norm",
    "weak_norm",
]

_SERIES_TERMS = 80


@dataclass(frozen=True)
class LorentzIndex:
    p: float
    q: float = math.inf

    def __post_init__(self):
        p, q = float(self.p), float(self.q)
        if not p > 1:
            raise LorentzIndexError(f"Lorentz index needs p > 1, got p={p}")
        if not q >= 1:
            raise LorentzIndexError(f"Lorentz index needs q >= 1, got q={q}")
        if math.isinf(p) and not math.isinf(q):
            raise LorentzIndexError("q < inf requires p < inf")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)


@dataclass(frozen=True, eq=False)
class StepRearrangement:
    """f* as levels ``values[0] > values[1] > ... > 0`` with positive ``measures``."""

    values: np.ndarray
    measures: np.ndarray

    @property
    def breakpoints(self) -> np.ndarray:
        """Cumulative measures t_1 < t_2 < ... (t_0 = 0 omitted)."""
        return np.cumsum(self.measures)

    @property
    def total_measure(self) -> float:
        return float(np.sum(self.measures))

    def __len__(self):
        return len(self.values)

    def __call__(self, t) -> np.ndarray:
        """Right-continuous evaluation of f*(t)."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breakpoints, t, side="right")
        padded = np.append(self.values, 0.0)
        return padded[idx]

    def maximal_average(self, t) -> np.ndarray:
        """f**(t) for t > 0."""
        t = np.asarray(t, dtype=float)
        bp = self.breakpoints
        mass = np.concatenate([[0.0], np.cumsum(self.values * self.measures)])
        starts = np.concatenate([[0.0], bp])
        idx = np.searchsorted(bp, t, side="right")
        level = np.append(self.values, 0.0)[idx]
        return (mass[idx] + level * (t - starts[idx])) / t

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["value", "measure"])
        for v, m in zip(self.values, self.measures):
            w.writerow([format(v, ".17g"), format(m, ".17g")])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def decreasing_rearrangement(f: Field) -> StepRearrangement:
    mags = np.abs(f.values).ravel()
    mags = mags[mags > 0]
    levels, counts = np.unique(mags, return_counts=True)
    return StepRearrangement(levels[::-1].copy(), counts[::-1] * f.grid.cell_volume)


def _weak_sup(values: np.ndarray, measures: np.ndarray, p: float) -> float:
    if math.isinf(p):
        return float(values[0])
    bp = np.cumsum(measures)
    mass = np.cumsum(values * measures)
    e = 1.0 / p - 1.0
    best = float(np.max(bp**e * mass))
    # interior stationary points of a t^(1/p-1) + v t^(1/p) on each piece
    start = np.concatenate([[0.0], bp[:-1]])
    prev_mass = np.concatenate([[0.0], mass[:-1]])
    a = prev_mass - values * start
    with np.errstate(over="ignore", divide="ignore"):
        t_star = a * (p - 1.0) / values
    inside = (t_star > start) & (t_star < bp)
    if np.any(inside):
        ts = t_star[inside]
        g = ts**e * (a[inside] + values[inside] * ts)
        best = max(best, float(np.max(g)))
    return best


def _expm1_ratio(e: np.ndarray, log_ratio: np.ndarray) -> np.ndarray:
    """(exp(e*L) - 1)/e with the e -> 0 limit L."""
    out = np.empty_like(log_ratio)
    zero = e == 0
    out[zero] = log_ratio[zero]
    nz = ~zero
    out[nz] = np.expm1(e[nz] * log_ratio[nz]) / e[nz]
    return out


def _power_series_integral(base: np.ndarray, log_ratio: np.ndarray, first: float, coeff_shift: float) -> np.ndarray:
    """sum_k c_k int_{x0}^{x1} x^(first-1+k) dx with c_k = (coeff_shift)_k / k!.

    ``base`` is x0 and ``log_ratio`` is log(x1/x0); x1 <= 1/2 so the
    binomial series converges geometrically. All terms are positive.
    """
    total = np.zeros_like(base)
    c = 1.0
    log_base = np.log(base)
    for k in range(_SERIES_TERMS):
        e = first + k
        ek = np.full_like(base, e)
        total += c * np.exp(e * log_base) * _expm1_ratio(ek, log_ratio)
        c *= (coeff_shift + k) / (k + 1.0)
    return total


def _piece_integrals(a, v, t0, t1, p, q):
    """int_{t0}^{t1} t^(q/p-q-1) (a + v t)^q dt for a, v, t0 > 0.

    With w = vt/(a+vt) the integral becomes a^s v^(q-s) times an incomplete
    Beta integral int w^(A-1) (1-w)^(-s-1) dw, A = s - q, s = q/p. It is
    expanded in w below w = 1/2 and in r = 1 - w above. Pieces with
    a <= 0 (levels equal up to rounding, so f** = v there) use the
    closed form v^q (t1^s - t0^s)/s.
    """
    s = q / p
    A = s - q
    total = np.zeros_like(a)
    flat = a <= 0
    if np.any(flat):
        vv, x0, x1 = v[flat], t0[flat], t1[flat]
        total[flat] = vv**q * x0**s * np.expm1(s * np.log(x1 / x0)) / s
        keep = ~flat
        total[keep] = _piece_integrals(a[keep], v[keep], t0[keep], t1[keep], p, q)
        return total
    t_mid = a / v

    lo_hi = np.minimum(t1, t_mid)
    low = t0 < lo_hi
    if np.any(low):
        aa, vv, x0, x1 = a[low], v[low], t0[low], lo_hi[low]
        w0 = vv * x0 / (aa + vv * x0)
        dt = x1 - x0
        log_ratio = np.log1p(dt / x0) - np.log1p(vv * dt / (aa + vv * x0))
        j = _power_series_integral(w0, log_ratio, A, s + 1.0)
        total[low] += aa**s * vv ** (q - s) * j

    hi_lo = np.maximum(t0, t_mid)
    high = hi_lo < t1
    if np.any(high):
        aa, vv, x0, x1 = a[high], v[high], hi_lo[high], t1[high]
        r1 = aa / (aa + vv * x1)
        log_ratio = np.log1p(vv * (x1 - x0) / (aa + vv * x0))
        j = _power_series_integral(r1, log_ratio, -s, 1.0 - A)
        total[high] += aa**s * vv ** (q - s) * j
    return total


def _strong_norm(values: np.ndarray, measures: np.ndarray, p: float, q: float) -> float:
    s = q / p
    bp = np.cumsum(measures)
    mass = np.cumsum(values * measures)
    # [0, t_1): f** = v_1
    integral = values[0] ** q * bp[0] ** s / s
    # [t_K, inf): f** = F_K / t
    integral += mass[-1] ** q * bp[-1] ** (s - q) / (q - s)
    if len(values) > 1:
        a = mass[:-1] - values[1:] * bp[:-1]
        integral += float(np.sum(_piece_integrals(a, values[1:], bp[:-1], bp[1:], p, q)))
    return float((p / q * integral) ** (1.0 / q))


def lorentz_norm(f: Union[Field, StepRearrangement], idx: LorentzIndex) -> float:
    """||f||_(p,q) evaluated exactly on the step rearrangement."""
    star = f if isinstance(f, StepRearrangement) else decreasing_rearrangement(f)
    if len(star) == 0:
        return 0.0
    values = np.asarray(star.values, dtype=float)
    measures = np.asarray(star.measures, dtype=float)
    if math.isinf(idx.q):
        return _weak_sup(values, measures, idx.p)
    return _strong_norm(values, measures, idx.p, idx.q)


def weak_norm(f: Union[Field, StepRearrangement], p: float) -> float:
    """Marcinkiewicz norm ||f||_(p,inf)."""
    return lorentz_norm(f, LorentzIndex(p, math.inf))
