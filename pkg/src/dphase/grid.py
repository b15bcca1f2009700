"""Uniform rectangular grids, nodal functions, balls and test functions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator


@dataclass(frozen=True)
class Grid:
    """Uniform lattice on a box in one or two dimensions.

    Values of a nodal function are stored as an array of shape ``n`` with
    ``indexing='ij'``; the flat (row-major) index of node ``(i, j)`` is
    ``i * n[1] + j``.
    """
    dim: int
    n: tuple
    extents: tuple

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.n) != self.dim or len(self.extents) != self.dim:
            raise ValueError("n_per_axis and extents must have one entry per axis")
        for k, nk in enumerate(self.n):
            if int(nk) != nk or nk < 3:
                raise ValueError(f"axis {k}: need at least 3 nodes, got {nk}")
        for k, (a, b) in enumerate(self.extents):
            if not (math.isfinite(a) and math.isfinite(b)) or a >= b:
                raise ValueError(f"axis {k}: degenerate extent [{a}, {b}]")

    @property
    def shape(self):
        return tuple(self.n)

    @property
    def size(self):
        return int(np.prod(self.n))

    @property
    def h(self):
        return tuple((b - a) / (nk - 1) for (a, b), nk in zip(self.extents, self.n))

    @property
    def hmin(self):
        return min(self.h)

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def axes(self):
        """Node coordinates per axis, ``a + k*h``."""
        return tuple(a + np.arange(nk) * hk
                     for (a, _), nk, hk in zip(self.extents, self.n, self.h))

    def coords(self):
        """Node coordinates, shape ``(size, dim)`` in flat order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def boundary_mask(self):
        """Boolean array (grid shape) marking nodes on the box boundary."""
        m = np.zeros(self.shape, dtype=bool)
        for k in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[k] = 0
            m[tuple(idx)] = True
            idx[k] = -1
            m[tuple(idx)] = True
        return m

    def margin_mask(self, margin):
        """Nodes whose index distance to the boundary is below ``margin``."""
        m = np.zeros(self.shape, dtype=bool)
        for k in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[k] = slice(0, margin)
            m[tuple(idx)] = True
            idx[k] = slice(self.n[k] - margin, None)
            m[tuple(idx)] = True
        return m

    def cell_centers(self):
        """Centers of cells, shape ``(ncells, dim)``, base node order."""
        mids = [ax[:-1] + 0.5 * hk for ax, hk in zip(self.axes, self.h)]
        mesh = np.meshgrid(*mids, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, point, tol=0.0):
        return all(a - tol <= x <= b + tol for x, (a, b) in zip(point, self.extents))

    def to_dict(self):
        return {"dim": self.dim, "n": list(self.n),
                "extents": [list(e) for e in self.extents]}


def make_grid(dim, n_per_axis, extents) -> Grid:
    """Build a :class:`Grid`.

    Parameters
    ----------
    dim : int
        1 or 2.
    n_per_axis : sequence of int
        Nodes per axis, each at least 3.
    extents : sequence of (a, b)
        Interval per axis with ``a < b``.
    """
    n = tuple(int(v) for v in np.atleast_1d(n_per_axis))
    ext = tuple((float(a), float(b)) for a, b in np.reshape(np.asarray(extents, float), (-1, 2)))
    return Grid(int(dim), n, ext)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real value per node of ``grid``; the array is read-only."""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid, fn):
        """Sample ``fn(*coords)`` at the nodes."""
        mesh = np.meshgrid(*grid.axes, indexing="ij")
        return cls(grid, np.broadcast_to(fn(*mesh), grid.shape))

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @property
    def flat(self):
        return self.values.ravel()

    def with_values(self, values):
        return GridFunction(self.grid, values)

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __add__(self, other):
        return GridFunction(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - _vals(other))

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * _vals(other))

    __rmul__ = __mul__

    def interpolator(self):
        """Multilinear interpolant (no extrapolation)."""
        axes = self.grid.axes
        if self.grid.dim == 1:
            ax = axes[0]
            vals = self.values
            return lambda pts: np.interp(np.asarray(pts, float).reshape(-1), ax, vals)
        return RegularGridInterpolator(axes, self.values, method="linear",
                                       bounds_error=False, fill_value=None)

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        if self.grid.dim == 1:
            return self.interpolator()(pts)
        return self.interpolator()(pts.reshape(-1, 2))


def _vals(other):
    return other.values if isinstance(other, GridFunction) else other


@dataclass(frozen=True)
class Ball:
    """Open Euclidean ball."""
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if not (self.radius > 0):
            raise ValueError(f"ball radius must be positive, got {self.radius}")

    def inside(self, grid: Grid):
        """True when the closed ball lies in the grid box."""
        return all(a <= c - self.radius and c + self.radius <= b
                   for c, (a, b) in zip(self.center, grid.extents))


def nodes_in_ball(grid: Grid, ball: Ball):
    """Flat indices of nodes at distance strictly below ``ball.radius``."""
    d2 = np.zeros(grid.shape)
    for k, ax in enumerate(grid.axes):
        shp = [1] * grid.dim
        shp[k] = -1
        d2 = d2 + ((ax - ball.center[k]) ** 2).reshape(shp)
    return np.flatnonzero(d2.ravel() < ball.radius ** 2)


def distance_field(grid: Grid, center):
    """Euclidean distance of each node to ``center`` (grid shape)."""
    d2 = np.zeros(grid.shape)
    for k, ax in enumerate(grid.axes):
        shp = [1] * grid.dim
        shp[k] = -1
        d2 = d2 + ((ax - center[k]) ** 2).reshape(shp)
    return np.sqrt(d2)


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Grid function that vanishes on all nodes within ``margin`` of the boundary."""
    fn: GridFunction
    margin: int = 1

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        if self.margin < 1:
            raise ValueError("support margin must be at least 1")
        if np.any(self.fn.values[self.fn.grid.margin_mask(self.margin)] != 0):
            raise ValueError("test function does not vanish within its margin")

    @property
    def grid(self):
        return self.fn.grid

    @property
    def values(self):
        return self.fn.values

    def times(self, other):
        """Product with any grid function; the support can only shrink."""
        return TestFunction(self.fn * other, self.margin)

    def support_cells(self):
        """Boolean mask over cells touching a nonzero node."""
        return cells_touching(self.grid, self.values != 0)


def cells_touching(grid: Grid, node_mask):
    """Cells (base-node order) with at least one corner in ``node_mask``."""
    m = np.asarray(node_mask, bool).reshape(grid.shape)
    if grid.dim == 1:
        return (m[:-1] | m[1:]).ravel()
    return (m[:-1, :-1] | m[1:, :-1] | m[:-1, 1:] | m[1:, 1:]).ravel()


def bump(grid: Grid, center, radius, margin=1):
    """Smooth bump ``exp(1 - 1/(1 - s^2))`` with peak 1, zeroed near the boundary."""
    s = distance_field(grid, np.atleast_1d(center)) / radius
    v = np.zeros(grid.shape)
    inside = s < 1
    v[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    v[grid.margin_mask(margin)] = 0.0
    return TestFunction(GridFunction(grid, v), margin)


def random_test_function(grid: Grid, rng, kind=None, nonnegative=True, margin=1, scale=1.0):
    """Draw a random compactly supported test function.

    ``kind`` is one of ``'bump'``, ``'spike'``, ``'patch'``; drawn uniformly
    when omitted.  The sup norm equals ``scale``.
    """
    kinds = ("bump", "spike", "patch")
    if kind is None:
        kind = kinds[rng.integers(len(kinds))]
    inner = [(a + margin * hk, b - margin * hk) for (a, b), hk in zip(grid.extents, grid.h)]
    if kind == "spike":
        idx = tuple(int(rng.integers(margin, nk - margin)) for nk in grid.n)
        v = np.zeros(grid.shape)
        v[idx] = 1.0
    else:
        c = [rng.uniform(lo, hi) for lo, hi in inner]
        span = min(hi - lo for lo, hi in inner)
        r = rng.uniform(2.5 * grid.hmin, max(0.3 * span, 3 * grid.hmin))
        v = bump(grid, c, r, margin).values.copy()
        if kind == "patch":
            v = v * rng.uniform(0.0, 1.0, size=grid.shape)
        if not v.any():
            idx = tuple(int(rng.integers(margin, nk - margin)) for nk in grid.n)
            v[idx] = 1.0
    v[grid.margin_mask(margin)] = 0.0
    if not nonnegative:
        v = v * rng.choice([-1.0, 1.0])
    top = np.abs(v).max()
    return TestFunction(GridFunction(grid, v * (scale / top)), margin)


def sup_on_ball(f: GridFunction, center, radius, closed=True, n_arc=None):
    """Supremum of the multilinear interpolant of ``f`` over a ball.

    Uses the nodes in the ball plus dense samples on its boundary (the two
    endpoints in 1D).  Points outside the grid box are ignored.
    """
    grid = f.grid
    center = np.atleast_1d(np.asarray(center, float))
    d = distance_field(grid, center)
    sel = d <= radius * (1 + 1e-13) if closed else d < radius
    best = -np.inf
    if sel.any():
        best = float(f.values[sel].max())
    if closed:
        pts = ball_boundary_points(center, radius, grid, n_arc)
        pts = pts[[grid.contains(p, tol=1e-12 * radius) for p in pts]]
        if len(pts):
            best = max(best, float(np.max(f(pts))))
    return best


def ball_boundary_points(center, radius, grid, n_arc=None):
    """Sample points on the sphere of given radius (both endpoints in 1D)."""
    center = np.atleast_1d(center)
    if grid.dim == 1:
        return np.array([[center[0] - radius], [center[0] + radius]])
    if n_arc is None:
        n_arc = 4 * max(16, int(math.ceil(2 * math.pi * radius / grid.hmin)))
    th = 2 * math.pi * np.arange(n_arc) / n_arc
    return np.stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)], axis=1)


# ---------------------------------------------------------------------------
# CSV serialization

def write_csv(u: GridFunction, path):
    """Write ``dim,n...`` / ``a,b,...`` header then one value per line."""
    g = u.grid
    lines = [",".join([str(g.dim)] + [str(k) for k in g.n]),
             ",".join(repr(float(x)) for e in g.extents for x in e)]
    lines += [repr(float(v)) for v in u.flat]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> GridFunction:
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip()]
    if len(rows) < 2:
        raise ValueError(f"{path}: missing header")
    head = [int(x) for x in rows[0].split(",")]
    dim, n = head[0], head[1:]
    ext = [float(x) for x in rows[1].split(",")]
    grid = make_grid(dim, n, np.reshape(ext, (-1, 2)))
    vals = np.array([float(x) for x in rows[2:]])
    if vals.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} values, found {vals.size}")
    return GridFunction(grid, vals.reshape(grid.shape))
