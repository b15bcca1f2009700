"""Cached solves shared by the unit and acceptance tests."""
from functools import lru_cache

import numpy as np

from dphase import Exponents, GridFunction, MinimizeOptions, make_grid, minimize_direct, oracle_1d
from dphase.freeboundary import extract_zero_set

SWEEP = [(a, b, p, q) for a in (0.5, 1.0, 2.0) for b in (0.5, 1.0, 2.0)
         for p, q in ((3.0, 2.0), (1.5, 2.5))]


def grid_1d(N):
    return make_grid(1, [N], [(-1.0, 1.0)])


@lru_cache(maxsize=None)
def solve_1d(a, b, p, q, N, multistart=3):
    """Discrete minimizer for ``u(-1) = -b``, ``u(1) = a``; returns (u, report, seconds)."""
    import time
    exps = Exponents(p, q)
    g = grid_1d(N)
    t = time.perf_counter()
    u, rep = minimize_direct(oracle_1d(a, b, exps).boundary_data(g), exps,
                             MinimizeOptions(multistart=multistart))
    return u, rep, time.perf_counter() - t


def crossing(u):
    return float(extract_zero_set(u).points[0, 0])


def two_plane_field(grid, alpha=1.0, beta=np.sqrt(2.0)):
    return GridFunction.from_callable(
        grid, lambda X, Y: alpha * np.maximum(Y, 0.0) - beta * np.maximum(-Y, 0.0))


@lru_cache(maxsize=None)
def solve_two_plane(nx, ny):
    """Single-start minimizer with two-plane boundary data on [-1, 1]^2."""
    g = make_grid(2, [nx, ny], [(-1.0, 1.0), (-1.0, 1.0)])
    exact = two_plane_field(g)
    u, rep = minimize_direct(exact, Exponents(3.0, 2.0), MinimizeOptions(multistart=1))
    return u, rep, exact
