"""Hölder-decay diagnostics and approximation ratio reports."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .energy import Exponents, cell_gradients, region_cells
from .errors import DiagnosticError, GammaConditionError
from .grid import Ball, Grid, GridFunction, nodes_in_ball, sup_on_ball
from .kernels import holder_quotient_kernel
from .pharmonic import p_harmonic_replace


@dataclass
class HolderReport:
    center: list
    alphas: list
    box: list
    seminorm_plus: list
    seminorm_minus: list
    normalized_plus: list
    normalized_minus: list
    box_distance: float
    radii: list
    sup_plus: list
    sup_minus: list
    decay_plus: list
    decay_minus: list
    exponent_plus: float
    exponent_minus: float
    notes: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)

    def decay_table(self):
        """Rows ``(k, radius, sup, ratio)`` for the positive phase."""
        rows = []
        for k, (r, s) in enumerate(zip(self.radii, self.sup_plus)):
            ratio = self.decay_plus[k - 1] if k > 0 else math.nan
            rows.append((k, r, s, ratio))
        return rows

    def write_decay_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "radius", "sup", "ratio"])
            for k, r, s, ratio in self.decay_table():
                w.writerow([k, repr(float(r)), repr(float(s)), repr(float(ratio))])


def boundary_distance(grid: Grid, z):
    z = np.atleast_1d(z)
    return float(min(min(c - a, b - c) for c, (a, b) in zip(z, grid.extents)))


def gamma_radii(grid: Grid, z, r0=None, min_cells=4.0):
    """Dyadic radii ``r0 2^-k`` down to ``min_cells * h``."""
    r = boundary_distance(grid, z) if r0 is None else float(r0)
    out = []
    while r >= min_cells * grid.hmin * (1 - 1e-12):
        out.append(r)
        r *= 0.5
    return out


def check_gamma(u: GridFunction, z, radii):
    """Raise :class:`GammaConditionError` at the first radius without both signs."""
    for r in radii:
        idx = nodes_in_ball(u.grid, Ball(z, r))
        vals = u.flat[idx]
        if vals.size == 0 or not (vals.min() <= 0.0 <= vals.max()):
            raise GammaConditionError(
                f"both signs are not present in B_r(z) for r={r!r}", {"radius": r})


def _fit_exponent(radii, sups):
    r = np.asarray(radii, float)
    s = np.asarray(sups, float)
    ok = s > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(r[ok]), np.log(s[ok]), 1)[0])


def holder_report(u: GridFunction, z, alphas, K, exps: Exponents = None, r0=None) -> HolderReport:
    """Hölder seminorms on a box and dyadic sup decay at a vanishing point.

    Parameters
    ----------
    u : GridFunction
    z : point
        Must see both signs in every ball ``B_r(z)`` of the dyadic sequence
        (down to radius ``4h``).
    alphas : list of float
        Exponents for the seminorms ``[u+-]_{C^{0,alpha}(K)}``, computed as
        the exact maximum over all node pairs in ``K``.
    K : list of (lo, hi)
        Sub-box, one interval per axis.
    exps : Exponents, optional
        Enables the normalized seminorms
        ``[u+-] * dist(K, boundary)^(alpha + n/p+-)`` with ``p+ = p``,
        ``p- = q``.
    r0 : float, optional
        Largest radius; defaults to the distance from ``z`` to the grid
        boundary.

    Raises
    ------
    GammaConditionError
        Names the first radius where a sign is missing.
    """
    grid = u.grid
    z = np.atleast_1d(np.asarray(z, float))
    K = [tuple(map(float, iv)) for iv in np.reshape(np.asarray(K, float), (-1, 2))]
    for (lo, hi), (a, b) in zip(K, grid.extents):
        if lo < a or hi > b or lo >= hi:
            raise DiagnosticError("sub-box K must be a nondegenerate box inside the grid")
    radii = gamma_radii(grid, z, r0)
    if not radii:
        raise DiagnosticError("z is closer than 4h to the grid boundary")
    check_gamma(u, z, radii)
    X = grid.coords()
    inK = np.all([(X[:, k] >= lo) & (X[:, k] <= hi) for k, (lo, hi) in enumerate(K)], axis=0)
    pts = X[inK]
    up = np.maximum(u.flat, 0.0)
    um = np.maximum(-u.flat, 0.0)
    al = np.asarray(alphas, float)
    sp_ = holder_quotient_kernel(pts, up[inK], al)
    sm_ = holder_quotient_kernel(pts, um[inK], al)
    dK = min(min(lo - a, b - hi) for (lo, hi), (a, b) in zip(K, grid.extents))
    notes = []
    if exps is not None and dK > 0:
        n = grid.dim
        npl = [float(s * dK ** (a + n / exps.p)) for s, a in zip(sp_, al)]
        nmi = [float(s * dK ** (a + n / exps.q)) for s, a in zip(sm_, al)]
    else:
        npl = nmi = [math.nan] * len(al)
        if exps is not None:
            notes.append("K touches the grid boundary; normalized seminorms undefined")
    fp = GridFunction(grid, up.reshape(grid.shape))
    fm = GridFunction(grid, um.reshape(grid.shape))
    supp = [sup_on_ball(fp, z, r) for r in radii]
    supm = [sup_on_ball(fm, z, r) for r in radii]
    dp = [b / a if a > 0 else 0.0 for a, b in zip(supp, supp[1:])]
    dm = [b / a if a > 0 else 0.0 for a, b in zip(supm, supm[1:])]
    return HolderReport(z.tolist(), al.tolist(), [list(k) for k in K], list(map(float, sp_)),
                        list(map(float, sm_)), npl, nmi, float(dK), radii, supp, supm, dp, dm,
                        _fit_exponent(radii, supp), _fit_exponent(radii, supm), notes)


# ---------------------------------------------------------------------------
# approximation diagnostics

def _grad_integral(grid, values, z, r, power):
    g = cell_gradients(grid, values)
    mag = np.sqrt((g * g).sum(axis=0))
    cells = region_cells(grid, Ball(z, r))
    return grid.cell_volume * float((mag ** power)[cells].sum())


def _value_integral(grid, values, z, r):
    idx = nodes_in_ball(grid, Ball(z, r))
    return grid.cell_volume * float(np.asarray(values).ravel()[idx].sum())


def approximation_diagnostics(u: GridFunction, exps: Exponents, z, s, r):
    """Ratios of the p-harmonic closeness and energy-decay bounds (constants 1).

    ``v`` is the p-harmonic replacement of ``u+`` on ``B_s(z)``.  For
    ``p >= 2`` the closeness bound compares ``int_{B_s} |grad(u+ - v)|^p``
    with ``(r-s)^-q int_{B_r} (u-)^q``; for ``1 < p < 2`` the right side is
    ``(r-s)^-q ||u-||_{L^q(B_r)}^(qp/2) ||grad u+||_{L^p(B_s)}^(p(1-p/2))``.
    The decay bound compares ``int_{B_s} |grad u+|^p`` with
    ``int_{B_r} (s/r)^n |grad u+|^p + (u-)^q/(r-s)^q``.  A vanishing right
    side gives ratio 0.
    """
    if not 0 < s < r:
        raise ValueError("need 0 < s < r")
    grid = u.grid
    z = tuple(np.atleast_1d(np.asarray(z, float)))
    if not Ball(z, r).inside(grid):
        raise DiagnosticError("B_r(z) must lie inside the grid")
    p, q, n = exps.p, exps.q, grid.dim
    up = np.maximum(u.values, 0.0)
    um = np.maximum(-u.values, 0.0)
    v = p_harmonic_replace(GridFunction(grid, up), Ball(z, s), p)
    lhs1 = _grad_integral(grid, up - v.values, z, s, p)
    um_q = _value_integral(grid, um ** q, z, r)
    if p >= 2:
        rhs1 = um_q / (r - s) ** q
        branch = "p>=2"
    else:
        gp = _grad_integral(grid, up, z, s, p)
        rhs1 = (r - s) ** (-q) * um_q ** (p / 2.0) * gp ** (1.0 - p / 2.0)
        branch = "1<p<2"
    lhs2 = _grad_integral(grid, up, z, s, p)
    rhs2 = (s / r) ** n * _grad_integral(grid, up, z, r, p) + um_q / (r - s) ** q
    return {
        "basic1_ratio": lhs1 / rhs1 if rhs1 > 0 else 0.0,
        "basic2_ratio": lhs2 / rhs2 if rhs2 > 0 else 0.0,
        "basic1_lhs": lhs1, "basic1_rhs": rhs1,
        "basic2_lhs": lhs2, "basic2_rhs": rhs2,
        "branch": branch, "s": s, "r": r, "center": [float(c) for c in z],
    }
