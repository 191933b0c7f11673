"""Allen-Cahn approximation of mean curvature flow on two-dimensional manifolds.

Modules: :mod:`~acflow.manifold` (grids and geometry),
:mod:`~acflow.phasefield` (double wells, initial data, time stepping),
:mod:`~acflow.measure` (energy measures, monotonicity kernel, density checks),
:mod:`~acflow.varifold` (first variation, Brakke functionals),
:mod:`~acflow.experiments` (exact flows and run harness) and
:mod:`~acflow.cli`.
"""

__version__ = "0.1.0"
