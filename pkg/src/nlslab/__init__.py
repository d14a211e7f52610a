"""Mild solutions of |u|^rho u Schrodinger equations in weak-L^p spaces.

Modules: :mod:`exponents` (parameter algebra), :mod:`grid` (fields and data),
:mod:`lorentz` (rearrangements and norms), :mod:`propagator` (free group),
:mod:`mild` (Duhamel quadrature and Picard iteration), :mod:`lab` (checks),
:mod:`config` and :mod:`cli` (experiment runner).
"""

__version__ = "0.1.0"
