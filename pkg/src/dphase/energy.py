"""Discrete double-phase energy, its gradient, and the symmetry/scaling maps.

Phases are split nodewise (``u+ = max(u, 0)``, ``u- = -min(u, 0)``) and then
differenced with forward differences on each cell; the cell integrand is
evaluated once per cell (midpoint rule).  With smoothing ``eps > 0`` the
integrand ``|g|^p`` becomes ``(|g|^2 + eps^2)^(p/2) - eps^p``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .grid import Ball, Grid, GridFunction, make_grid, random_test_function


@dataclass(frozen=True)
class Exponents:
    """Growth exponents of the positive (``p``) and negative (``q``) phase."""
    p: float
    q: float

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if not (1.0 < v < math.inf):
                raise ValueError(f"exponent {name}={v} must lie in (1, inf)")
        if self.p == self.q:
            raise ValueError(f"exponents must differ (p != q), got p = q = {self.p}")

    def swapped(self):
        return Exponents(self.q, self.p)


@dataclass(frozen=True)
class PhasePair:
    uplus: GridFunction
    uminus: GridFunction

    def __post_init__(self):
        a, b = self.uplus.values, self.uminus.values
        if np.any(a < 0) or np.any(b < 0) or np.any(a * b != 0):
            raise ValueError("phases must be nonnegative with disjoint supports")


@dataclass(frozen=True)
class EnergyBreakdown:
    total: float
    positive_part: float
    negative_part: float
    p: float
    q: float
    smoothing: float = 0.0

    def to_dict(self):
        return {"total": self.total, "positive_part": self.positive_part,
                "negative_part": self.negative_part, "p": self.p, "q": self.q,
                "smoothing": self.smoothing}


def split(u: GridFunction) -> PhasePair:
    """Nodewise positive and negative parts."""
    v = u.values
    return PhasePair(GridFunction(u.grid, np.maximum(v, 0.0)),
                     GridFunction(u.grid, -np.minimum(v, 0.0)))


# ---------------------------------------------------------------------------
# difference operators

@lru_cache(maxsize=16)
def difference_operators(grid: Grid):
    """Forward-difference matrices, one per axis, mapping nodes to cells."""
    idx = np.arange(grid.size).reshape(grid.shape)
    base = idx[(slice(0, -1),) * grid.dim].ravel()
    ncell = base.size
    rows = np.arange(ncell)
    ops = []
    for k, hk in enumerate(grid.h):
        stride = idx.strides[k] // idx.itemsize
        data = np.concatenate([np.full(ncell, -1.0 / hk), np.full(ncell, 1.0 / hk)])
        D = sp.csr_matrix((data, (np.concatenate([rows, rows]),
                                  np.concatenate([base, base + stride]))),
                          shape=(ncell, grid.size))
        ops.append(D)
    return tuple(ops)


def cell_gradients(grid: Grid, values):
    """Forward-difference gradient per cell, shape ``(dim, ncells)``."""
    flat = np.asarray(values, float).ravel()
    return np.stack([D @ flat for D in difference_operators(grid)])


def region_cells(grid: Grid, region=None):
    """Boolean mask over cells for ``region``.

    ``region`` may be ``None`` (all cells), a :class:`Ball` (cells whose
    centers lie in the open ball) or a boolean cell mask.
    """
    ncell = int(np.prod([nk - 1 for nk in grid.n]))
    if region is None:
        return np.ones(ncell, dtype=bool)
    if isinstance(region, Ball):
        c = grid.cell_centers()
        m = ((c - np.asarray(region.center)) ** 2).sum(axis=1) < region.radius ** 2
        if not m.any() and not _box_meets_ball(grid, region):
            raise ValueError("region does not intersect the grid")
        return m
    m = np.asarray(region, dtype=bool).ravel()
    if m.size != ncell:
        raise ValueError(f"cell mask has {m.size} entries, grid has {ncell} cells")
    return m


def _box_meets_ball(grid, ball):
    d2 = 0.0
    for c, (a, b) in zip(ball.center, grid.extents):
        d2 += max(a - c, 0.0, c - b) ** 2
    return d2 < ball.radius ** 2


def phase_integrand(g2, e, eps):
    """``(|g|^2 + eps^2)^(e/2) - eps^e`` per cell."""
    if eps == 0.0:
        return g2 ** (0.5 * e)
    return (g2 + eps * eps) ** (0.5 * e) - eps ** e


def phase_energy(grid, values, e, eps=0.0, cells=None):
    """Cell-quadrature of the smoothed integrand of a single nonnegative phase."""
    g = cell_gradients(grid, values)
    f = phase_integrand((g * g).sum(axis=0), e, eps)
    if cells is not None:
        f = f[cells]
    return grid.cell_volume * float(f.sum())


def energy(u: GridFunction, region=None, exps: Exponents = None, smoothing=0.0) -> EnergyBreakdown:
    """Discrete energy of ``u`` on ``region`` (ball, cell mask or whole grid)."""
    if exps is None:
        raise TypeError("energy() requires exps")
    if smoothing < 0:
        raise ValueError(f"smoothing must be >= 0, got {smoothing}")
    cells = region_cells(u.grid, region)
    v = u.values
    pos = phase_energy(u.grid, np.maximum(v, 0.0), exps.p, smoothing, cells)
    neg = phase_energy(u.grid, -np.minimum(v, 0.0), exps.q, smoothing, cells)
    return EnergyBreakdown(pos + neg, pos, neg, exps.p, exps.q, float(smoothing))


def phase_flux(grid, values, e, eps=0.0):
    """Cell flux ``(|g|^2+eps^2)^(e/2-1) g`` times ``e`` and cell volume."""
    g = cell_gradients(grid, values)
    g2 = (g * g).sum(axis=0)
    if eps == 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(g2 > 0, g2 ** (0.5 * e - 1.0), 0.0)
    else:
        w = (g2 + eps * eps) ** (0.5 * e - 1.0)
    return e * grid.cell_volume * w * g


def divergence_pairing(grid, flux):
    """Apply the transposed difference operators: ``sum_k D_k^T flux_k``."""
    out = np.zeros(grid.size)
    for D, fk in zip(difference_operators(grid), flux):
        out += D.T @ fk
    return out


def first_variation(u: GridFunction, exps: Exponents, smoothing) -> GridFunction:
    """Exact gradient of the smoothed discrete energy with respect to node values."""
    if not smoothing > 0:
        raise ValueError("first_variation needs smoothing > 0 (the energy is nonsmooth at eps = 0)")
    grid = u.grid
    v = u.flat
    up, um = np.maximum(v, 0.0), -np.minimum(v, 0.0)
    rp = divergence_pairing(grid, phase_flux(grid, up, exps.p, smoothing))
    rm = divergence_pairing(grid, phase_flux(grid, um, exps.q, smoothing))
    grad = np.where(v > 0, rp, 0.0) - np.where(v < 0, rm, 0.0)
    return GridFunction(grid, grad.reshape(grid.shape))


# ---------------------------------------------------------------------------
# local minimality

@dataclass
class LocalMinReport:
    max_energy_drop: float
    passed: bool
    tolerance: float
    trials: int
    amplitude: float
    energy: float

    def to_dict(self):
        return dict(self.__dict__)


def local_min_check(u: GridFunction, exps: Exponents, trials=64, amplitude=None, seed=0,
                    margin=1) -> LocalMinReport:
    """Random compactly supported perturbation test of local minimality.

    For each trial a test function ``phi`` (bump, single-node spike or
    noisy patch, sup norm ``amplitude``) is drawn and both ``u + phi`` and
    ``u - phi`` are compared with ``u`` on the cells touching the support
    of ``phi``.  The report carries the largest energy drop; the check
    passes when it stays below ``1e-8 * (1 + |J(u)|)``.

    ``amplitude`` defaults to ``1e-4 * max|u|`` (or 1e-4 for ``u = 0``).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    umax = float(np.abs(u.values).max())
    if amplitude is None:
        amplitude = 1e-4 * umax if umax > 0 else 1e-4
    if not amplitude > 0:
        raise ValueError("amplitude must be positive")
    J = energy(u, None, exps).total
    tol = 1e-8 * (1.0 + abs(J))
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(trials):
        phi = random_test_function(u.grid, rng, nonnegative=False, margin=margin,
                                   scale=amplitude)
        cells = phi.support_cells()
        base = energy(u, cells, exps).total
        for sgn in (1.0, -1.0):
            moved = energy(GridFunction(u.grid, u.values + sgn * phi.values), cells, exps).total
            worst = max(worst, base - moved)
    return LocalMinReport(float(worst), bool(worst <= tol), tol, int(trials),
                          float(amplitude), J)


# ---------------------------------------------------------------------------
# symmetry and scaling

def negate_swap(u: GridFunction, exps: Exponents):
    """``(-u, (q, p))``: the sign flip exchanges the roles of the phases."""
    return -u, exps.swapped()


def negative_phase_divisor(rho, S, exps: Exponents):
    """``rho^(1 - p/q) * S^(p/q)``."""
    # one fractional power keeps simple cases exact (0.5, 2, p=3, q=2 -> 4.0)
    return (rho ** (exps.q - exps.p) * S ** exps.p) ** (1.0 / exps.q)


def rescale(u: GridFunction, ball: Ball, S, exps: Exponents, n_per_axis=None) -> GridFunction:
    """Two-parameter rescaling onto ``[-1, 1]^dim``.

    ``w(x) = u+(rho x + x_B)/S - u-(rho x + x_B)/(rho^(1-p/q) S^(p/q))`` with
    ``u`` evaluated by multilinear interpolation.  The default resolution
    keeps the source spacing, so when the ball center is a node and the
    radius a multiple of ``h`` every new node maps onto an old node.
    """
    if not S > 0:
        raise ValueError(f"S must be positive, got {S}")
    grid = u.grid
    rho = float(ball.radius)
    tol = 1e-9 * max(grid.h)
    for c, (a, b) in zip(ball.center, grid.extents):
        if c - rho < a - tol or c + rho > b + tol:
            raise ValueError("mapped region leaves the source grid")
    if n_per_axis is None:
        n_per_axis = [int(round(2 * rho / hk)) + 1 for hk in grid.h]
    new = make_grid(grid.dim, n_per_axis, [(-1.0, 1.0)] * grid.dim)
    mesh = np.meshgrid(*new.axes, indexing="ij")
    pts = np.stack([rho * m.ravel() + c for m, c in zip(mesh, ball.center)], axis=1)
    for k, (a, b) in enumerate(grid.extents):
        pts[:, k] = np.clip(pts[:, k], a, b)
    vals = u(pts) if grid.dim == 2 else u(pts[:, 0])
    vals = np.asarray(vals).reshape(new.shape)
    div = negative_phase_divisor(rho, S, exps)
    w = np.maximum(vals, 0.0) / S + np.minimum(vals, 0.0) / div
    return GridFunction(new, w)
