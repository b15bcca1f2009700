"""p-harmonic replacement, weak-form residuals, classical ratios, and the
sup-convolution / extremal-operator / radius-family toolkit."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .energy import cell_gradients, divergence_pairing, phase_energy, phase_flux, region_cells
from .grid import Ball, Grid, GridFunction, make_grid, nodes_in_ball
from .kernels import sup_convolution_kernel
from .solvers import SolverError, newton, phase_terms

DEFAULT_EPS_SCHEDULE = (1e-2, 1e-4, 1e-6, 1e-9, 1e-12)


def _region_mask(grid: Grid, region):
    if isinstance(region, Ball):
        idx = nodes_in_ball(grid, region)
        m = np.zeros(grid.size, dtype=bool)
        m[idx] = True
        return m
    r = np.asarray(region)
    if r.dtype == bool:
        if r.size != grid.size:
            raise ValueError("node mask has the wrong size")
        return r.ravel().copy()
    m = np.zeros(grid.size, dtype=bool)
    m[r.ravel().astype(int)] = True
    return m


def discrete_boundary(grid: Grid, mask):
    """Nodes outside ``mask`` that share a cell with a node inside it."""
    m = np.asarray(mask, bool).reshape(grid.shape)
    grown = m.copy()
    if grid.dim == 1:
        grown[1:] |= m[:-1]
        grown[:-1] |= m[1:]
    else:
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                src = m[max(-di, 0):grid.n[0] - max(di, 0), max(-dj, 0):grid.n[1] - max(dj, 0)]
                grown[max(di, 0):grid.n[0] - max(-di, 0), max(dj, 0):grid.n[1] - max(-dj, 0)] |= src
    return (grown & ~m).ravel()


@dataclass
class DirichletProblem:
    """Unknowns on ``region`` (node mask) with values fixed elsewhere."""
    grid: Grid
    region: np.ndarray
    boundary_values: GridFunction
    p: float

    def __post_init__(self):
        self.region = _region_mask(self.grid, self.region)
        if np.any(self.region & self.grid.boundary_mask().ravel()):
            raise ValueError("region must lie strictly inside the grid")
        if not 1 < self.p < math.inf:
            raise ValueError(f"p must lie in (1, inf), got {self.p}")

    @property
    def boundary(self):
        return discrete_boundary(self.grid, self.region)


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_grad_norm: float
    energy: float
    eps_trace: list = field(default_factory=list)

    def to_dict(self):
        return {"converged": self.converged, "iterations": self.iterations,
                "final_grad_norm": self.final_grad_norm, "energy": self.energy,
                "eps_trace": list(self.eps_trace)}


def gradient_scale(grid, values):
    g = cell_gradients(grid, values)
    G = float(np.sqrt((g * g).sum(axis=0)).max()) if g.size else 0.0
    return G if G > 0 else 1.0


def solve_dirichlet(problem: DirichletProblem, x0=None, tol=1e-10, max_iter=200,
                    eps_schedule=DEFAULT_EPS_SCHEDULE):
    """Minimize the discrete ``sum |grad v|^p`` with ``v`` fixed off the region.

    The smoothing ``eps`` runs through ``eps_schedule`` (relative to the
    largest cell gradient of the data); each stage is a damped Newton solve.
    ``tol`` is measured in units of the natural nodal residual size
    ``G^(p-1) * h^(dim-1)``.
    """
    grid, p = problem.grid, problem.p
    x = np.array(problem.boundary_values.flat if x0 is None else np.asarray(x0, float).ravel())
    free = np.flatnonzero(problem.region)
    if x0 is None and p < 2.0 and free.size:
        # sublinear growth makes far-field Newton steps crawl; start from the p = 2 solve
        # at e = 2 any eps > 0 gives the plain Laplacian, including on flat cells
        E2, g2, H2 = phase_terms(grid, x, 2.0, 1.0)
        Hf = H2[free][:, free].tocsc()
        x[free] += spla.spsolve(Hf, -g2[free])
    G = gradient_scale(grid, x)
    unit = G ** (p - 1.0) * grid.hmin ** (grid.dim - 1)
    trace = []
    total_it = 0
    rep = None
    for k, er in enumerate(eps_schedule):
        eps = er * G
        ev = lambda v, eps=eps: phase_terms(grid, v, p, eps)
        val = lambda v, eps=eps: phase_energy(grid, v, p, eps)
        last = k == len(eps_schedule) - 1
        x, rep = newton(ev, val, x, free, gtol=(tol if last else 1e3 * tol) * unit,
                        max_iter=max_iter)
        total_it += rep.iterations
        trace.append({"eps": eps, "iterations": rep.iterations, "grad_norm": rep.grad_norm,
                      "energy": rep.energy, "status": rep.status})
    grad = divergence_pairing(grid, phase_flux(grid, x, p, 0.0))
    gn = float(np.abs(grad[free]).max()) if free.size else 0.0
    ok = bool(gn <= 1e3 * tol * unit) or rep.converged
    report = SolveReport(ok, total_it, gn, phase_energy(grid, x, p), trace)
    if not ok:
        raise SolverError(f"p-harmonic solve did not converge (residual {gn:.3e})", report)
    return GridFunction(grid, x.reshape(grid.shape)), report


def p_harmonic_replace(u: GridFunction, region, p, full_output=False, **kwargs):
    """p-harmonic function on ``region`` agreeing with ``u`` elsewhere.

    Parameters
    ----------
    u : GridFunction
        Supplies the boundary values and the initial guess.
    region : Ball, index array or node mask
        Interior unknowns; must avoid the grid boundary.
    p : float
        Exponent in ``(1, inf)``.
    full_output : bool
        Also return the :class:`SolveReport`.

    Raises
    ------
    SolverError
        When Newton fails to reach the residual tolerance; the exception
        carries the report.
    """
    prob = DirichletProblem(u.grid, region, u, p)
    v, rep = solve_dirichlet(prob, **kwargs)
    return (v, rep) if full_output else v


def weak_form_residual(u: GridFunction, p, tests):
    """``sum_cells |g|^(p-2) g . grad(phi)`` for each test function.

    A nonpositive value for every nonnegative ``phi`` is the discrete weak
    subsolution inequality.
    """
    grid = u.grid
    pair = divergence_pairing(grid, phase_flux(grid, u.flat, p, 0.0)) / p
    return [float(pair @ np.asarray(phi.values, float).ravel()) for phi in tests]


# ---------------------------------------------------------------------------
# classical ratios

def _ball_integral(grid, values, z, r):
    idx = nodes_in_ball(grid, Ball(z, r))
    return grid.cell_volume * float(np.asarray(values).ravel()[idx].sum())


def classical_ratios(v: GridFunction, p, z, r, s):
    """Left/right ratios of the Caccioppoli, local-maximum and Harnack bounds.

    All constants are set to one.  Balls are ``B_r(z) \\subset B_s(z)`` with
    ``r < s``; integrals use cell quadrature (gradients) and node
    quadrature (values).

    Returns
    -------
    dict
        ``caccioppoli``, ``locmax``, ``harnack`` (raw sup/inf on ``B_r``) and
        ``harnack_geometric`` (``r/(s-r)``).
    """
    if not 0 < r < s:
        raise ValueError("need 0 < r < s")
    grid = v.grid
    z = tuple(np.atleast_1d(z).astype(float))
    if not Ball(z, s).inside(grid):
        raise ValueError("balls must lie inside the grid")
    n = grid.dim
    g = cell_gradients(grid, v.flat)
    cells = region_cells(grid, Ball(z, r))
    lhs_c = grid.cell_volume * float((np.sqrt((g * g).sum(axis=0)) ** p)[cells].sum())
    rhs_c = _ball_integral(grid, np.abs(v.values) ** p, z, s) / (s - r) ** p
    vp = np.maximum(v.values, 0.0)
    in_r = nodes_in_ball(grid, Ball(z, r))
    sup_r = float(vp.ravel()[in_r].max()) if in_r.size else 0.0
    rhs_l = ((s - r) ** (-n) * _ball_integral(grid, vp ** p, z, s)) ** (1.0 / p)
    in_s = nodes_in_ball(grid, Ball(z, s))
    vals_s = v.flat[in_s]
    if vals_s.size == 0 or np.any(vals_s <= 0):
        raise ValueError("Harnack ratio needs v > 0 on B_s(z)")
    vals_r = v.flat[in_r]
    return {
        "caccioppoli": _ratio(lhs_c, rhs_c),
        "locmax": _ratio(sup_r, rhs_l),
        "harnack": float(vals_r.max() / vals_r.min()),
        "harnack_geometric": r / (s - r),
    }


def _ratio(a, b):
    if b == 0:
        return 0.0 if a == 0 else math.inf
    return float(a / b)


# ---------------------------------------------------------------------------
# sup-convolution

def sup_convolution(u: GridFunction, phi, clip=False) -> GridFunction:
    """``v(x) = max`` of ``u`` over nodes in the closed ball ``B_phi(x)(x)``.

    Parameters
    ----------
    u : GridFunction
    phi : GridFunction or float
        Positive radius per node.
    clip : bool
        When False (default) any ball leaving the grid box is an error;
        when True the ball is intersected with the grid.
    """
    grid = u.grid
    rad = np.broadcast_to(phi.values if isinstance(phi, GridFunction) else np.asarray(phi, float),
                          grid.shape)
    if np.any(~(rad > 0)):
        raise ValueError("radii must be positive")
    if not clip:
        mesh = np.meshgrid(*grid.axes, indexing="ij")
        tol = 1e-12 * max(abs(e) for ext in grid.extents for e in ext) + 1e-15
        for k, (a, b) in enumerate(grid.extents):
            if np.any(mesh[k] - rad < a - tol) or np.any(mesh[k] + rad > b + tol):
                raise ValueError("a sup-convolution ball escapes the grid (pass clip=True "
                                 "to intersect with the box)")
    out = sup_convolution_kernel(u.values, grid.h, rad)
    return GridFunction(grid, out)


# ---------------------------------------------------------------------------
# extremal operator

def _bounds(e):
    return min(e - 1.0, 1.0), max(e - 1.0, 1.0)


def pucci_pq(M, p, q):
    """``min over e in {p, q}`` of ``sum(a_min mu+ - a_max mu-)`` over eigenvalues.

    Equals the infimum of ``tr(A M)`` over symmetric ``A`` whose eigenvalues
    lie in ``[min(e-1, 1), max(e-1, 1)]`` for ``e = p`` or ``e = q``.
    Accepts a single matrix or a stack ``(..., n, n)``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.shape[-1] != M.shape[-2]:
        raise ValueError("matrix must be square")
    asym = np.abs(M - np.swapaxes(M, -1, -2)).max() if M.size else 0.0
    if asym > 1e-12:
        raise ValueError(f"matrix is not symmetric (asymmetry {asym:.3e})")
    mu = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))
    pos, neg = np.maximum(mu, 0.0), np.maximum(-mu, 0.0)
    vals = []
    for e in (p, q):
        lo, hi = _bounds(e)
        vals.append((lo * pos - hi * neg).sum(axis=-1))
    out = np.minimum(vals[0], vals[1])
    return float(out) if np.ndim(out) == 0 else out


def sample_admissible(n, p, q, count, rng, concentration=0.1):
    """Random symmetric matrices from ``S_p`` or ``S_q`` (chosen at random).

    Eigenvalues are drawn from a Beta(c, c) law stretched to the admissible
    interval, which puts most mass near the extremes; eigenvectors are
    uniformly random.
    """
    which = rng.integers(2, size=count)
    lam = rng.beta(concentration, concentration, size=(count, n))
    for k, e in enumerate((p, q)):
        lo, hi = _bounds(e)
        sel = which == k
        lam[sel] = lo + (hi - lo) * lam[sel]
    Q, R = np.linalg.qr(rng.standard_normal((count, n, n)))
    Q = Q * np.sign(np.diagonal(R, axis1=1, axis2=2))[:, None, :]
    A = np.einsum("kij,kj,klj->kil", Q, lam, Q)
    return A


# ---------------------------------------------------------------------------
# radius family

@dataclass
class RadiusFamily:
    t: float
    gamma: float
    rho: float
    N: int
    p: float
    q: float
    h: float
    center: tuple
    grid: Grid
    increment: np.ndarray  # phi_t - 1 on the sample grid, nan outside the domain
    mask: np.ndarray

    @property
    def values(self):
        return 1.0 + np.nan_to_num(self.increment, nan=0.0)


@dataclass
class Fam1Report:
    checked_points: int
    violations: dict
    worst_margin: dict
    h: float
    params: dict

    @property
    def total_violations(self):
        return int(sum(self.violations.values()))

    def to_dict(self):
        return {"checked_points": self.checked_points, "violations": dict(self.violations),
                "total_violations": self.total_violations,
                "worst_margin": dict(self.worst_margin), "h": self.h, "params": dict(self.params)}


class _Fam1Profile:
    """Closed-form radial profile ``F = A * g^3`` with
    ``g = ((rho/r)^(2N) - (rho/R)^(2N))+ / (1 - (rho/R)^(2N))``."""

    def __init__(self, rho, N, p, q, n, K, R=0.35):
        self.rho, self.N, self.R = rho, N, R
        self.c = (rho / R) ** (2 * N)
        amin = min(p - 1.0, q - 1.0, 1.0)
        self.A = 0.5 * min(amin, K * rho * (1.0 - self.c) / (6.0 * N))

    def __call__(self, r):
        with np.errstate(divide="ignore", over="ignore"):
            g = np.maximum((self.rho / r) ** (2 * self.N) - self.c, 0.0) / (1.0 - self.c)
        return self.A * g ** 3


def fam1_radius(t, gamma, rho, N, p=3.0, q=2.0, samples=129, margin=1.0, R=0.35):
    """Variable-radius family ``phi_t = 1 + t*gamma/K * F`` and its pointwise check.

    ``K = 50 max(p, q) n`` with ``n = 2``; ``F`` is a truncated, normalized
    power ``|x - e_2/8|^(-2N)`` profile (cubed so that it is C^2 at the
    truncation radius ``R``).  The four defining conditions are checked at
    every node of a ``samples x samples`` grid over ``[-2, 2]^2`` that lies
    in the closed ball of radius 2 and outside ``B_rho(e_2/8)``, with
    central finite differences for the gradient and the Hessian.

    Parameters
    ----------
    t : float in [0, 1]
    gamma : float in (0, 1/2)
    rho : float in (0, 1/100)
    N : int
        Must satisfy ``N >= margin * max(p, q, 1/(p-1), 1/(q-1))`` and make
        the radial-versus-tangential curvature balance positive.

    Returns
    -------
    (RadiusFamily, Fam1Report)
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if not 0.0 < gamma < 0.5:
        raise ValueError(f"gamma must lie in (0, 1/2), got {gamma}")
    if not 0.0 < rho < 0.01:
        raise ValueError(f"rho must lie in (0, 1/100), got {rho}")
    if not (p > 1 and q > 1):
        raise ValueError("exponents must exceed 1")
    n = 2
    need = margin * max(p, q, 1.0 / (p - 1.0), 1.0 / (q - 1.0))
    if N < need:
        raise ValueError(f"N={N} below the required {need:.4g}")
    amin = min(p - 1.0, q - 1.0, 1.0)
    amax = max(p - 1.0, q - 1.0, 1.0)
    if amin * (2 * N + 1) - amax * (n - 1) <= 0:
        raise ValueError(f"N={N} too small for the curvature balance")
    K = 50.0 * max(p, q) * n
    prof = _Fam1Profile(rho, N, p, q, n, K, R)
    x0 = np.array([0.0, 0.125])
    scale = t * gamma / K

    def inc(x, y):
        return scale * prof(np.hypot(x - x0[0], y - x0[1]))

    h = 0.5 * float(prof(np.array(3.0 / 16.0))) / K
    grid = make_grid(2, [samples, samples], [(-2.0, 2.0), (-2.0, 2.0)])
    X, Y = np.meshgrid(*grid.axes, indexing="ij")
    r0 = np.hypot(X, Y)
    rr = np.hypot(X - x0[0], Y - x0[1])
    mask = (r0 <= 2.0 + 1e-12) & (rr >= rho)
    x, y = X[mask], Y[mask]
    d = inc(x, y)
    st = 1e-4 * np.maximum(rr[mask], rho)
    dxp, dxm = inc(x + st, y), inc(x - st, y)
    dyp, dym = inc(x, y + st), inc(x, y - st)
    gx, gy = (dxp - dxm) / (2 * st), (dyp - dym) / (2 * st)
    hxx = (dxp - 2 * d + dxm) / st ** 2
    hyy = (dyp - 2 * d + dym) / st ** 2
    hxy = (inc(x + st, y + st) - inc(x + st, y - st) - inc(x - st, y + st)
           + inc(x - st, y - st)) / (4 * st ** 2)
    Hs = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)
    P = pucci_pq(Hs, p, q)
    grad2 = gx * gx + gy * gy
    lhs = (1.0 + d) * P
    rhs = K * grad2
    rel = 1e-6
    viol = {}
    worst = {}
    outer = r0[mask] >= 0.5
    viol["unit_outside_half_ball"] = int(np.count_nonzero(d[outer] != 0.0))
    worst["unit_outside_half_ball"] = float(np.abs(d[outer]).max()) if outer.any() else 0.0
    inner = r0[mask] < 1.0 / 16.0
    lift = d[inner] - h * gamma * t
    viol["lift_on_inner_ball"] = int(np.count_nonzero(lift < -rel * h * gamma * t))
    worst["lift_on_inner_ball"] = float(lift.min()) if inner.any() else 0.0
    closed = rr[mask] > rho
    bound = (d < 0) | (d > t * gamma * (1 + rel))
    gnorm = np.sqrt(grad2)
    viol["range_bound"] = int(np.count_nonzero(bound[closed]))
    worst["range_bound"] = float((t * gamma - d[closed]).min()) if closed.any() else 0.0
    viol["gradient_bound"] = int(np.count_nonzero(gnorm[closed] > t * gamma * (1 + rel) + 1e-300))
    worst["gradient_bound"] = float((t * gamma - gnorm[closed]).min()) if closed.any() else 0.0
    slack = lhs - rhs
    viol["curvature_inequality"] = int(np.count_nonzero(slack < -rel * (np.abs(lhs) + np.abs(rhs))))
    worst["curvature_inequality"] = float(slack.min())
    incr = np.full(grid.shape, np.nan)
    incr[mask] = d
    fam = RadiusFamily(t, gamma, rho, int(N), p, q, h, tuple(x0), grid, incr, mask)
    params = {"t": t, "gamma": gamma, "rho": rho, "N": int(N), "p": p, "q": q, "K": K,
              "amplitude": prof.A, "truncation_radius": R, "samples": samples}
    return fam, Fam1Report(int(mask.sum()), viol, worst, h, params)
