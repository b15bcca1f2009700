"""Free-boundary geometry and measure diagnostics.

Covers zero-set extraction, the flux balance across the interface, slope
estimates along a normal, the distributional p-Laplacian of ``u+`` as a
measure, flatness, blow-up sequences and graph fits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from skimage.measure import find_contours

from .energy import Exponents, divergence_pairing, phase_flux
from .errors import DegeneratePointError, DiagnosticError
from .grid import Grid, GridFunction, TestFunction, distance_field, make_grid, sup_on_ball


# ---------------------------------------------------------------------------
# level sets

@dataclass
class LevelSet:
    """Interface points; in 2D also ordered polylines (marching squares)."""
    dim: int
    points: np.ndarray
    polylines: list = field(default_factory=list)
    level: float = 0.0

    @classmethod
    def from_polylines(cls, polylines, level=0.0):
        lines = [np.asarray(pl, float) for pl in polylines if len(pl)]
        pts = np.unique(np.vstack(lines), axis=0) if lines else np.empty((0, 2))
        return cls(2, pts, lines, level)

    @property
    def empty(self):
        return len(self.points) == 0

    def write_csv(self, path):
        """``x[,y]`` per row; blank lines separate polylines."""
        with open(path, "w") as fh:
            if self.dim == 1:
                fh.write("".join(f"{float(x)!r}\n" for x in self.points.ravel()))
                return
            blocks = ["".join(f"{float(a)!r},{float(b)!r}\n" for a, b in pl)
                      for pl in self.polylines]
            fh.write("\n".join(blocks))

    def segments(self):
        """All polyline segments as ``(start, end)`` arrays."""
        if not self.polylines:
            return np.empty((0, 2)), np.empty((0, 2))
        a = np.vstack([pl[:-1] for pl in self.polylines if len(pl) > 1] or [np.empty((0, 2))])
        b = np.vstack([pl[1:] for pl in self.polylines if len(pl) > 1] or [np.empty((0, 2))])
        return a, b


def _crossings_1d(grid: Grid, values, level):
    x = grid.axes[0]
    h = grid.h[0]
    v = np.asarray(values, float).ravel() - level
    a, b = v[:-1], v[1:]
    edge = ((a < 0) & (b > 0)) | ((a > 0) & (b < 0))
    k = np.flatnonzero(edge)
    pts = list(x[k] + h * a[k] / (a[k] - b[k]))
    # zero nodes on the boundary of {v > 0}
    zero = np.flatnonzero(v == 0)
    for i in zero:
        if (i > 0 and v[i - 1] > 0) or (i < v.size - 1 and v[i + 1] > 0):
            pts.append(x[i])
    return np.unique(np.asarray(pts, float))


def extract_zero_set(u: GridFunction, level=0.0) -> LevelSet:
    """Level set ``{u = level}`` from sign changes along grid edges.

    1D: linear interpolation on each edge with a strict sign change, plus
    nodes equal to the level that touch ``{u > level}``.  2D: marching
    squares polylines (vertices lie on grid edges).
    """
    grid = u.grid
    if grid.dim == 1:
        pts = _crossings_1d(grid, u.values, level)
        return LevelSet(1, pts.reshape(-1, 1), [], float(level))
    v = u.values
    if not (np.any(v > level) and np.any(v <= level)):
        return LevelSet(2, np.empty((0, 2)), [], float(level))
    (a0, _), (a1, _) = grid.extents
    h0, h1 = grid.h
    lines = []
    for c in find_contours(v, level):
        pl = np.column_stack([a0 + c[:, 0] * h0, a1 + c[:, 1] * h1])
        lines.append(pl)
    ls = LevelSet.from_polylines(lines, level)
    return ls


# ---------------------------------------------------------------------------
# flux balance

def bump_field(center, radius, direction=None):
    """Vector test field ``direction * bump`` with a smooth radial bump.

    In 1D the direction is +1.  Returns a callable mapping points
    ``(m, dim)`` to vectors ``(m, dim)``.
    """
    center = np.atleast_1d(np.asarray(center, float))
    d = np.ones(1) if direction is None and center.size == 1 else np.asarray(
        direction if direction is not None else [0.0, 1.0], float)
    d = d / np.linalg.norm(d)

    def eta(x):
        x = np.asarray(x, float).reshape(-1, center.size)
        s2 = ((x - center) ** 2).sum(axis=1) / radius ** 2
        b = np.zeros(len(x))
        inside = s2 < 1
        b[inside] = np.exp(1.0 - 1.0 / (1.0 - s2[inside]))
        return b[:, None] * d[None, :]

    return eta


def _nodal_gradient(u: GridFunction):
    g = np.gradient(u.values, *u.grid.h, edge_order=2)
    if u.grid.dim == 1:
        g = [g]
    return [GridFunction(u.grid, gk) for gk in g]


def _level_integral(u, grads, level, side, e, eta, dist):
    """Polyline quadrature of ``(e-1)|grad u|^(e-1) grad u . eta`` on ``{u = level}``.

    ``side = +1`` samples the gradient ``dist`` into ``{u > level}``,
    ``side = -1`` into ``{u < level}``.  Returns ``None`` when empty.
    """
    grid = u.grid
    ls = extract_zero_set(u, level)
    if ls.empty:
        return None
    if grid.dim == 1:
        m = ls.points
        gm = grads[0](m[:, 0])
        normal = np.sign(gm)[:, None]
        normal[normal == 0] = 1.0
        y = m + side * dist * normal
        keep = np.array([grid.contains(p) for p in y])
        if not keep.any():
            return None
        gy = grads[0](y[keep, 0])[:, None]
        w = np.ones(keep.sum())
        mid = m[keep]
    else:
        a, b = ls.segments()
        if len(a) == 0:
            return None
        mid = 0.5 * (a + b)
        tang = b - a
        w = np.linalg.norm(tang, axis=1)
        ok = w > 0
        mid, tang, w = mid[ok], tang[ok], w[ok]
        nrm = np.column_stack([tang[:, 1], -tang[:, 0]]) / w[:, None]
        gm = np.column_stack([g(mid) for g in grads])
        flip = (nrm * gm).sum(axis=1) < 0
        nrm[flip] *= -1
        y = mid + side * dist * nrm
        keep = np.array([grid.contains(p) for p in y])
        if not keep.any():
            return None
        mid, w, y = mid[keep], w[keep], y[keep]
        gy = np.column_stack([g(y) for g in grads])
    mag = np.sqrt((gy * gy).sum(axis=1))
    dot = (gy * eta(mid)).sum(axis=1)
    return float(((e - 1.0) * mag ** (e - 1.0) * dot * w).sum())


@dataclass
class FluxReport:
    tests: list
    residual: float
    balanced: bool
    notes: list

    def to_dict(self):
        return {"tests": self.tests, "residual": self.residual, "balanced": self.balanced,
                "notes": list(self.notes)}


def _phase_slope(u, grads, sign, band):
    """Median gradient magnitude on nodes of one phase near the interface."""
    mag = np.sqrt(sum(g.values ** 2 for g in grads))
    v = sign * u.values
    sel = (v > 0) & (v <= band)
    if not sel.any():
        sel = v > 0
    return float(np.median(mag[sel])) if sel.any() else 0.0


def flux_balance(u: GridFunction, exps: Exponents, eps_levels=None, tests=None,
                 delta_levels=None, multiples=(2.0, 3.0, 4.0, 5.0), tolerance=0.05):
    """Compare the interface fluxes of the two phases.

    For each level ``eps`` (positive side) and ``delta`` (negative side)
    the integrals

        (p-1) sum over {u = eps}    |grad u|^(p-1) grad u . eta
        (q-1) sum over {u = -delta} |grad u|^(q-1) grad u . eta

    are computed by polyline quadrature with the gradient sampled one cell
    away from the level set on its own side; each side is then extrapolated
    to level 0 by a linear least-squares fit.

    Parameters
    ----------
    eps_levels, delta_levels : list of float, optional
        Default: ``multiples * h * g`` with ``g`` the typical gradient of
        the respective phase next to the interface.
    tests : list of callables, optional
        Vector fields ``eta``; default is a bump times the vertical
        direction (``+1`` in 1D) centred on the middle interface point.

    Returns
    -------
    FluxReport
        ``residual`` is the largest relative difference of the extrapolated
        integrals; ``balanced`` compares it with ``tolerance``.
    """
    grid = u.grid
    grads = _nodal_gradient(u)
    h = grid.hmin
    notes = []
    umax = float(np.abs(u.values).max())
    zs = extract_zero_set(u)
    if tests is None:
        if zs.empty:
            raise DiagnosticError("no interface and no test fields given")
        pts = zs.points
        c = pts[np.argsort(np.linalg.norm(pts - pts.mean(axis=0), axis=1))[0]]
        diam = min(b - a for a, b in grid.extents)
        tests = [bump_field(c, 0.25 * diam, None if grid.dim == 1 else [0.0, 1.0])]
    band = 10 * h * max(float(np.sqrt(sum(g.values ** 2 for g in grads)).max()), 1e-300)
    gp = _phase_slope(u, grads, 1.0, band)
    gq = _phase_slope(u, grads, -1.0, band)
    if eps_levels is None:
        eps_levels = [m * h * gp for m in multiples] if gp > 0 else []
    if delta_levels is None:
        if gq > 0:
            delta_levels = [m * h * gq for m in multiples]
        else:
            delta_levels = []
            notes.append("negative phase absent near the interface; q-side integrals set to 0")
    out = []
    worst = 0.0
    for ti, eta in enumerate(tests):
        sides = {}
        for name, levels, sgn, e in (("p", eps_levels, 1.0, exps.p),
                                     ("q", delta_levels, -1.0, exps.q)):
            lv, vals = [], []
            for lev in levels:
                if not 0 < lev < umax:
                    notes.append(f"test {ti}: {name}-level {lev!r} outside (0, max|u|), skipped")
                    continue
                val = _level_integral(u, grads, sgn * lev, sgn, e, eta, h)
                if val is None:
                    notes.append(f"test {ti}: {name}-level {lev!r} empty, skipped")
                    continue
                lv.append(lev)
                vals.append(val)
            if len(lv) >= 2:
                intercept = float(np.polyfit(lv, vals, 1)[1])
            elif len(lv) == 1:
                intercept = vals[0]
            else:
                intercept = 0.0
            sides[name] = (lv, vals, intercept)
        Ip, Iq = sides["p"][2], sides["q"][2]
        scale = max(abs(Ip), abs(Iq))
        res = abs(Ip - Iq) / scale if scale > 0 else 0.0
        worst = max(worst, res)
        out.append({"levels_p": sides["p"][0], "integrals_p": sides["p"][1], "extrapolated_p": Ip,
                    "levels_q": sides["q"][0], "integrals_q": sides["q"][1], "extrapolated_q": Iq,
                    "difference": Iq - Ip, "residual": res})
    return FluxReport(out, float(worst), bool(worst <= tolerance), notes)


# ---------------------------------------------------------------------------
# slopes

@dataclass
class SlopePair:
    alpha: float
    beta: float
    balance_residual: float
    radii: list = field(default_factory=list)
    alpha_samples: list = field(default_factory=list)
    beta_samples: list = field(default_factory=list)
    alpha_trend: float = 0.0
    beta_trend: float = 0.0

    def to_dict(self):
        return dict(self.__dict__)


def balance_residual(alpha, beta, exps: Exponents):
    """``|(p-1) a^p - (q-1) b^q| / max((p-1) a^p, (q-1) b^q, 1e-300)``."""
    a = (exps.p - 1.0) * alpha ** exps.p
    b = (exps.q - 1.0) * beta ** exps.q
    return abs(a - b) / max(a, b, 1e-300)


def _cone_sup(f: GridFunction, z, nu, r, half_angle=math.pi / 4):
    grid = f.grid
    z = np.atleast_1d(z)
    if grid.dim == 1:
        x = grid.axes[0]
        sel = (nu[0] * (x - z[0]) >= 0) & (np.abs(x - z[0]) <= r * (1 + 1e-13))
        best = float(f.values[sel].max()) if sel.any() else -np.inf
        tip = z + r * nu
        return max(best, float(f(tip)[0])) if grid.contains(tip) else best
    d = distance_field(grid, z)
    X, Y = np.meshgrid(*grid.axes, indexing="ij")
    proj = (X - z[0]) * nu[0] + (Y - z[1]) * nu[1]
    sel = (d <= r * (1 + 1e-13)) & (proj >= math.cos(half_angle) * d)
    best = float(f.values[sel].max()) if sel.any() else -np.inf
    n_arc = 2 * max(8, int(math.ceil(r * half_angle / grid.hmin))) + 1
    th = np.linspace(-half_angle, half_angle, n_arc)
    perp = np.array([-nu[1], nu[0]])
    arc = z + r * (np.cos(th)[:, None] * nu + np.sin(th)[:, None] * perp)
    arc = arc[[grid.contains(p) for p in arc]]
    if len(arc):
        best = max(best, float(np.max(f(arc))))
    return best


def default_radii(grid: Grid, z, count=6, rmin_cells=3.0):
    z = np.atleast_1d(z)
    dist = min(min(c - a, b - c) for c, (a, b) in zip(z, grid.extents))
    span = min(b - a for a, b in grid.extents)
    rmax = min(0.5 * dist, 0.25 * span)
    rmin = max(rmin_cells * grid.hmin, rmax / 8)
    if rmax <= rmin:
        return [rmax]
    return list(np.geomspace(rmax, rmin, count))


def slope_asymptotics(u: GridFunction, z, nu, radii=None, exps: Exponents = None) -> SlopePair:
    """Normal slopes of both phases at an interface point.

    ``alpha`` is the least-squares slope (with intercept) of
    ``r -> sup of u+ over B_r(z) within the 45-degree cone around nu``;
    ``beta`` likewise for ``u-`` around ``-nu``.  Radii below ``3h`` are
    dropped.  The trends are the slopes of the per-radius ratios
    ``sup/r`` against ``r`` (near zero when the profile is linear).
    """
    if exps is None:
        raise TypeError("slope_asymptotics() requires exps for the balance residual")
    grid = u.grid
    z = np.atleast_1d(np.asarray(z, float))
    nu = np.atleast_1d(np.asarray(nu, float))
    nu = nu / np.linalg.norm(nu)
    if radii is None:
        radii = default_radii(grid, z)
    radii = [float(r) for r in radii if r >= 3 * grid.hmin * (1 - 1e-12)]
    if len(radii) < 2:
        raise DiagnosticError("need at least two radii of at least 3h")
    up = GridFunction(grid, np.maximum(u.values, 0.0))
    um = GridFunction(grid, np.maximum(-u.values, 0.0))
    ms = np.array([_cone_sup(up, z, nu, r) for r in radii])
    mn = np.array([_cone_sup(um, z, -nu, r) for r in radii])
    R = np.asarray(radii)
    alpha = max(float(np.polyfit(R, ms, 1)[0]), 0.0)
    beta = max(float(np.polyfit(R, mn, 1)[0]), 0.0)
    ta = float(np.polyfit(R, ms / R, 1)[0])
    tb = float(np.polyfit(R, mn / R, 1)[0])
    return SlopePair(alpha, beta, balance_residual(alpha, beta, exps), list(R),
                     list(ms / R), list(mn / R), ta, tb)


# ---------------------------------------------------------------------------
# the measure Delta_p u+

def plap_measure(uplus: GridFunction, p, phi) -> float:
    """``-sum_cells |grad u+|^(p-2) grad u+ . grad phi`` (cell quadrature)."""
    grid = uplus.grid
    vals = phi.values if isinstance(phi, (TestFunction, GridFunction)) else np.asarray(phi)
    pair = divergence_pairing(grid, phase_flux(grid, uplus.flat, p, 0.0)) / p
    return -float(pair @ np.asarray(vals, float).ravel())


def ball_indicator(grid: Grid, center, radius, width=None, margin=1):
    """Mollified indicator of ``B_r``: 1 inside ``r - w/2``, 0 outside ``r + w/2``.

    The transition is the C^1 smoothstep; ``width`` defaults to ``2h``.
    """
    w = 2 * grid.hmin if width is None else width
    d = distance_field(grid, np.atleast_1d(center))
    t = np.clip((radius + 0.5 * w - d) / w, 0.0, 1.0)
    v = t * t * (3.0 - 2.0 * t)
    v[grid.margin_mask(margin)] = 0.0
    return TestFunction(GridFunction(grid, v), margin)


@dataclass
class MeasureReport:
    radii: list
    ball_measures: list
    growth_ratios: list
    normalized_growth: list
    sup_r: list
    sup_2r: list
    doubling_ratios: list
    flagged: list
    skipped: list
    test_values: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


def dyadic_radii(grid: Grid, z, min_cells=4.0):
    z = np.atleast_1d(z)
    dist = min(min(c - a, b - c) for c, (a, b) in zip(z, grid.extents))
    r = 0.5 * dist - grid.hmin
    out = []
    while r >= min_cells * grid.hmin:
        out.append(r)
        r *= 0.5
    return out


def measure_growth_report(uplus: GridFunction, p, z, radii=None, tests=(), band=4.0):
    """Growth and doubling of ``Delta_p u+`` on balls around ``z``.

    For each radius the ball measure is ``plap_measure`` against a
    mollified indicator (width ``2h``).  Growth ratio is
    ``measure / r^(n-p)``; the normalized ratio further divides by
    ``sup(u+ on B_2r)^(p-1)``.  Consecutive normalized ratios differing by
    more than ``band`` are flagged; radii below ``4h`` are skipped.
    """
    grid = uplus.grid
    n = grid.dim
    z = np.atleast_1d(np.asarray(z, float))
    if radii is None:
        radii = dyadic_radii(grid, z)
    used, skipped = [], []
    for r in radii:
        (used if r >= 4 * grid.hmin else skipped).append(float(r))
    meas, raw, norm, s1, s2, dbl = [], [], [], [], [], []
    for r in used:
        m = plap_measure(uplus, p, ball_indicator(grid, z, r))
        a = sup_on_ball(uplus, z, r)
        b = sup_on_ball(uplus, z, 2 * r)
        meas.append(m)
        raw.append(m / r ** (n - p))
        norm.append(raw[-1] / b ** (p - 1) if b > 0 else 0.0)
        s1.append(a)
        s2.append(b)
        dbl.append(b / a if a > 0 else math.nan)
    flagged = []
    for k in range(1, len(norm)):
        lo, hi = sorted((abs(norm[k - 1]), abs(norm[k])))
        if hi > band * lo and hi > 1e-12:
            flagged.append(used[k])
    tv = [plap_measure(uplus, p, phi) for phi in tests]
    return MeasureReport(used, meas, raw, norm, s1, s2, dbl, flagged, skipped, tv)


# ---------------------------------------------------------------------------
# flatness and graph fits

@dataclass
class GraphFit:
    is_graph: bool
    holder_exponent_fit: float
    residual: float
    offending_abscissa: float = math.nan
    segments: int = 0

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class FlatnessReport:
    center: list
    radius: float
    directions: list
    h_values: list
    hbar: float
    nu_star: list
    n_points: int
    graph: GraphFit = None

    def to_dict(self):
        d = dict(self.__dict__)
        d["graph"] = self.graph.to_dict() if self.graph is not None else None
        return d


def _clip_to_ball(levelset: LevelSet, z, r):
    """Points of the level set inside ``B_r(z)`` plus crossings with its boundary."""
    if levelset.dim == 1:
        p = levelset.points[:, 0]
        return p[np.abs(p - z[0]) < r].reshape(-1, 1)
    pts = []
    a, b = levelset.segments()
    for P, Q in zip(a, b):
        d = Q - P
        f = P - z
        A = d @ d
        if A == 0:
            continue
        B = 2 * f @ d
        C = f @ f - r * r
        disc = B * B - 4 * A * C
        if disc <= 0:
            continue
        sq = math.sqrt(disc)
        t0, t1 = (-B - sq) / (2 * A), (-B + sq) / (2 * A)
        lo, hi = max(t0, 0.0), min(t1, 1.0)
        if lo < hi:
            pts.append(P + lo * d)
            pts.append(P + hi * d)
    return np.array(pts) if pts else np.empty((0, 2))


def flatness(u, z, r, n_directions=256, fit_graph=True) -> FlatnessReport:
    """Slab heights ``h(nu) = sup |<x - z, nu>|`` over the interface in ``B_r(z)``.

    ``u`` may be a GridFunction or an already extracted :class:`LevelSet`.
    Directions ``2 pi k / n`` are used in 2D, ``+-1`` in 1D; ``hbar`` is
    the minimum and ``nu_star`` its first minimizer.
    """
    ls = u if isinstance(u, LevelSet) else extract_zero_set(u)
    z = np.atleast_1d(np.asarray(z, float))
    pts = _clip_to_ball(ls, z, r)
    if len(pts) == 0:
        raise DiagnosticError(f"no interface points within radius {r} of {z.tolist()}")
    if ls.dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        th = 2 * math.pi * np.arange(n_directions) / n_directions
        dirs = np.column_stack([np.cos(th), np.sin(th)])
    hv = np.abs((pts - z) @ dirs.T).max(axis=0)
    k = int(np.argmin(hv))
    graph = None
    if fit_graph and ls.dim == 2:
        try:
            graph = graph_fit(ls, dirs[k], (z, r))
        except DiagnosticError:
            graph = None
    return FlatnessReport(z.tolist(), float(r), dirs.tolist(), hv.tolist(), float(hv[k]),
                          dirs[k].tolist(), int(len(pts)), graph)


def graph_fit(levelset: LevelSet, nu, window) -> GraphFit:
    """Test whether the interface is a graph over the line normal to ``nu``.

    ``window`` is ``(center, halfwidth)``: the square of that half-width
    aligned with ``nu``.  Each polyline run inside the window must have
    strictly monotone abscissa ``x' = <x - c, tau>`` and different runs
    must not overlap in ``x'``.  The Hölder exponent of the segment normal
    field is the log-log slope of ``max |n_i - n_j|`` against the abscissa
    gap, over geometric gap bins between four segment lengths and half the
    window; the residual is the RMS misfit of that regression.
    """
    if levelset.dim != 2:
        raise DiagnosticError("graph_fit needs a 2D level set")
    c, hw = window
    c = np.asarray(c, float)
    nu = np.asarray(nu, float) / np.linalg.norm(nu)
    tau = np.array([nu[1], -nu[0]])
    runs = []
    for pl in levelset.polylines:
        rel = pl - c
        inside = (np.abs(rel @ tau) <= hw) & (np.abs(rel @ nu) <= hw)
        idx = np.flatnonzero(inside)
        if idx.size == 0:
            continue
        cuts = np.flatnonzero(np.diff(idx) > 1) + 1
        for part in np.split(idx, cuts):
            if part.size >= 2:
                runs.append(pl[part])
    if not runs:
        raise DiagnosticError("no interface inside the window")
    offending = math.nan
    ranges = []
    for run in runs:
        xs = (run - c) @ tau
        dx = np.diff(xs)
        nz = dx[dx != 0]
        if nz.size and not (np.all(nz > 0) or np.all(nz < 0)):
            sgn = np.sign(nz[0])
            turn = np.flatnonzero(np.sign(dx) == -sgn)[0]
            offending = float(xs[turn])
            break
        if np.any(dx == 0):
            offending = float(xs[np.flatnonzero(dx == 0)[0]])
            break
        ranges.append((xs.min(), xs.max()))
    if math.isnan(offending):
        ranges.sort()
        for (a0, a1), (b0, b1) in zip(ranges, ranges[1:]):
            if b0 < a1:
                offending = float(b0)
                break
    nseg = sum(len(rn) - 1 for rn in runs)
    if not math.isnan(offending):
        return GraphFit(False, math.nan, math.nan, offending, nseg)
    xs_all, n_all, seglen = [], [], []
    for run in runs:
        d = np.diff(run, axis=0)
        L = np.linalg.norm(d, axis=1)
        nrm = np.column_stack([-d[:, 1], d[:, 0]]) / L[:, None]
        nrm[(nrm @ nu) < 0] *= -1
        xs_all.append(((0.5 * (run[1:] + run[:-1])) - c) @ tau)
        n_all.append(nrm)
        seglen.append(L)
    xs = np.concatenate(xs_all)
    nn = np.vstack(n_all)
    dmin = 4 * float(np.median(np.concatenate(seglen)))
    dmax = 0.5 * hw
    if not dmax > dmin:
        return GraphFit(True, math.nan, 0.0, math.nan, nseg)
    dx = np.abs(xs[:, None] - xs[None, :])
    dn = np.linalg.norm(nn[:, None, :] - nn[None, :, :], axis=2)
    edges = np.geomspace(dmin, dmax, 9)
    lx, ly = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (dx >= lo) & (dx < hi)
        if not sel.any():
            continue
        top = dn[sel].max()
        if top > 1e-9:
            lx.append(math.log(math.sqrt(lo * hi)))
            ly.append(math.log(top))
    if len(lx) < 3:
        return GraphFit(True, math.nan, 0.0, math.nan, nseg)
    coef = np.polyfit(lx, ly, 1)
    resid = np.asarray(ly) - np.polyval(coef, lx)
    return GraphFit(True, float(coef[0]), float(np.sqrt(np.mean(resid ** 2))), math.nan, nseg)


# ---------------------------------------------------------------------------
# blow-ups

@dataclass
class BlowupReport:
    radii: list
    gaps: list
    last_gap: float
    normalizations: list
    normalization_error: float
    normalizers: list
    source_sups: list
    nu: list
    limit_slopes: dict

    def to_dict(self):
        return dict(self.__dict__)


def _unit_grid(dim, n):
    return make_grid(dim, [n] * dim, [(-1.0, 1.0)] * dim)


def blowup_sequence(u: GridFunction, z, radii, exps: Exponents, n_unit=None, nu=None):
    """Anisotropic rescalings ``u_{z,r}`` on a fixed unit grid.

    ``u_{z,r}(x) = u+(2 r x + z)/S - u-(2 r x + z)/((2r)^(1-p/q) S^(p/q))``
    where ``S`` is the largest value of ``u+`` at the unit-grid nodes of
    the closed ball of radius 1/2 (the image of ``B_r(z)``), so the
    normalization holds to rounding.  ``u`` is evaluated by multilinear
    interpolation.

    Returns
    -------
    (list of GridFunction, BlowupReport)
    """
    grid = u.grid
    z = np.atleast_1d(np.asarray(z, float))
    ls = extract_zero_set(u)
    if ls.empty or float(np.min(np.linalg.norm(ls.points - z, axis=1))) > grid.hmin:
        raise DiagnosticError(f"{z.tolist()} is not on the free boundary")
    if n_unit is None:
        n_unit = 401 if grid.dim == 1 else 129
    ug = _unit_grid(grid.dim, n_unit)
    X = ug.coords()
    rad = np.linalg.norm(X, axis=1)
    half = rad <= 0.5 + 1e-12
    unit = rad <= 1.0 + 1e-12
    seq, norms, S_list, src = [], [], [], []
    tol = 1e-9 * max(grid.h)
    r_ratio = exps.p / exps.q
    for r in radii:
        for c, (a, b) in zip(z, grid.extents):
            if c - 2 * r < a - tol or c + 2 * r > b + tol:
                raise DiagnosticError(f"B_(2r)(z) with r={r} leaves the grid")
        pts = z + 2 * r * X
        for k, (a, b) in enumerate(grid.extents):
            pts[:, k] = np.clip(pts[:, k], a, b)
        vals = np.asarray(u(pts if grid.dim == 2 else pts[:, 0]), float)
        S = float(np.maximum(vals[half], 0.0).max())
        if not S > 0:
            raise DegeneratePointError(f"u+ vanishes on B_r(z) for r={r}")
        div = (2 * r) ** (1.0 - r_ratio) * S ** r_ratio
        w = np.maximum(vals, 0.0) / S + np.minimum(vals, 0.0) / div
        seq.append(GridFunction(ug, w.reshape(ug.shape)))
        norms.append(float(np.maximum(w[half], 0.0).max()))
        S_list.append(S)
        src.append(sup_on_ball(GridFunction(grid, np.maximum(u.values, 0.0)), z, r))
    gaps = [float(np.abs(b.flat[unit] - a.flat[unit]).max()) for a, b in zip(seq, seq[1:])]
    if nu is None:
        nu = _interface_normal(seq[-1])
    nu = np.atleast_1d(np.asarray(nu, float))
    sp = slope_asymptotics(seq[-1], np.zeros(grid.dim), nu, [0.25, 0.5, 0.75], exps)
    report = BlowupReport(list(map(float, radii)), gaps, gaps[-1] if gaps else math.nan, norms,
                          float(max(abs(v - 1.0) for v in norms)), S_list, src, nu.tolist(),
                          {"alpha": sp.alpha, "beta": sp.beta,
                           "balance_residual": sp.balance_residual})
    return seq, report


def _interface_normal(w: GridFunction):
    """Unit direction of the mean gradient on the unit ball."""
    grads = np.gradient(w.values, *w.grid.h)
    if w.grid.dim == 1:
        return np.array([1.0 if np.mean(grads) >= 0 else -1.0])
    X = w.grid.coords()
    sel = (np.linalg.norm(X, axis=1) <= 0.5).reshape(w.grid.shape)
    v = np.array([g[sel].mean() for g in grads])
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.array([0.0, 1.0])
