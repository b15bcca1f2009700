"""Numerical laboratory for the double-phase free boundary energy

    J(v) = sum over cells of |grad v+|^p + |grad v-|^q

on uniform 1D/2D grids: minimizers, free-boundary diagnostics and
regularity checks.
"""
from .grid import Ball, Grid, GridFunction, TestFunction, make_grid, nodes_in_ball
from .energy import (EnergyBreakdown, Exponents, PhasePair, energy, first_variation,
                     local_min_check, negate_swap, rescale, split)
from .minimizer import (MinimizeOptions, Oracle1DSolution, minimize_alternating,
                        minimize_direct, oracle_1d)
from .solvers import SolverError

__version__ = "0.1.0"

__all__ = [
    "Ball", "Grid", "GridFunction", "TestFunction", "make_grid", "nodes_in_ball",
    "EnergyBreakdown", "Exponents", "PhasePair", "energy", "first_variation",
    "local_min_check", "negate_swap", "rescale", "split",
    "MinimizeOptions", "Oracle1DSolution", "minimize_alternating", "minimize_direct",
    "oracle_1d", "SolverError",
]
