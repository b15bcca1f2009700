"""Discrete local minimizers of the double-phase energy and the 1D oracle.

The discrete energy is convex for a frozen sign pattern but not globally,
and with a sharp nodewise split the interface gets pinned to grid cells.
:func:`minimize_direct` therefore runs three phases per start:

1. continuation in a diffuse split ``u+ ~ (u + sqrt(u^2 + d^2))/2`` with
   ``d`` shrinking from several cells to zero, together with shrinking
   gradient smoothing ``eps``; each stage is a damped Newton solve;
2. sharp-split Newton polish at tiny ``eps``;
3. front moves: flip the sign of every node adjacent to the other phase,
   relax, and keep the move only if the sharp energy drops.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .energy import Exponents, energy, phase_energy
from .grid import GridFunction, bump
from .pharmonic import DirichletProblem, gradient_scale, solve_dirichlet
from .solvers import SolverError, newton, phase_terms
import scipy.sparse as sp


DEFAULT_EPS = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 1e-4, 1e-6, 1e-9)
DEFAULT_SPLIT = (16.0, 8.0, 4.0, 2.0, 1.0, 0.5, 0.0, 0.0)


@dataclass
class MinimizeOptions:
    """Options for :func:`minimize_direct`.

    ``eps_schedule`` is relative to the data gradient scale ``G`` and
    ``split_schedule`` (diffuse split width) to ``G * h``.
    """
    eps_schedule: tuple = DEFAULT_EPS
    split_schedule: tuple = DEFAULT_SPLIT
    max_iters: int = 200
    armijo: float = 1e-4
    grad_tol: float = 1e-8
    final_grad_tol: float = 1e-13
    multistart: int = 3
    seed: int = 0
    front_moves: bool = True
    max_moves: int | None = None
    threads: int | None = None

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_schedule)
        spl = tuple(float(s) for s in self.split_schedule)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("smoothing schedule must be nonempty and positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("smoothing schedule must be strictly decreasing")
        if len(spl) != len(eps):
            raise ValueError("split schedule must match the smoothing schedule in length")
        if any(s < 0 for s in spl) or any(b > a for a, b in zip(spl, spl[1:])) or spl[-1] != 0:
            raise ValueError("split schedule must be nonincreasing, nonnegative, ending at 0")
        if self.max_iters < 1 or self.multistart < 1:
            raise ValueError("max_iters and multistart must be >= 1")
        if not 0 < self.armijo < 0.5:
            raise ValueError("armijo constant must lie in (0, 1/2)")
        self.eps_schedule, self.split_schedule = eps, spl


def thread_count(requested=None):
    """Worker count, capped by the ``DPL_THREADS`` environment variable."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("DPL_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, int(n))


# ---------------------------------------------------------------------------
# objective

def split_phases(u, d):
    """Diffuse split ``(w+, w-, dw+/du, d2w+/du2)``; sharp when ``d == 0``."""
    if d == 0:
        wp = np.maximum(u, 0.0)
        wm = np.maximum(-u, 0.0)
        sig = np.where(u > 0, 1.0, np.where(u < 0, 0.0, 0.5))
        return wp, wm, sig, np.zeros_like(u)
    r = np.sqrt(u * u + d * d)
    pos = u >= 0
    with np.errstate(divide="ignore"):
        wp = np.where(pos, 0.5 * (u + r), 0.5 * d * d / (r - u))
        wm = np.where(pos, 0.5 * d * d / (r + u), 0.5 * (r - u))
    sig = 0.5 * (1.0 + u / r)
    curv = 0.5 * d * d / r ** 3
    return wp, wm, sig, curv


class DoublePhaseObjective:
    """Smoothed double-phase energy with optional diffuse split."""

    def __init__(self, grid, exps: Exponents, eps, split=0.0):
        self.grid, self.exps, self.eps, self.split = grid, exps, float(eps), float(split)

    def value(self, u):
        wp, wm, _, _ = split_phases(u, self.split)
        return (phase_energy(self.grid, wp, self.exps.p, self.eps)
                + phase_energy(self.grid, wm, self.exps.q, self.eps))

    def evaluate(self, u):
        wp, wm, sig, curv = split_phases(u, self.split)
        Ep, gp, Hp = phase_terms(self.grid, wp, self.exps.p, self.eps)
        Eq, gq, Hq = phase_terms(self.grid, wm, self.exps.q, self.eps)
        grad = sig * gp + (sig - 1.0) * gq
        Sp = sp.diags(sig)
        Sm = sp.diags(sig - 1.0)
        H = Sp @ Hp @ Sp + Sm @ Hq @ Sm
        extra = curv * (gp + gq)
        if np.any(extra):
            H = H + sp.diags(extra)
        return Ep + Eq, grad, H.tocsr()


# ---------------------------------------------------------------------------
# reports

@dataclass
class StartRecord:
    index: int
    energy: float = math.inf
    stages: list = field(default_factory=list)
    moves_tried: int = 0
    moves_accepted: int = 0
    status: str = "ok"

    def to_dict(self):
        return {"index": self.index, "energy": self.energy, "stages": list(self.stages),
                "moves_tried": self.moves_tried, "moves_accepted": self.moves_accepted,
                "status": self.status}


@dataclass
class MinimizeReport:
    chosen: int
    energy: float
    starts: list
    harmonic_energy: float
    options: dict

    def json_lines(self):
        """One JSON object per (start, stage)."""
        out = []
        for st in self.starts:
            for rec in st.stages:
                out.append(json.dumps({"start": st.index, **rec}, sort_keys=True))
        return out

    def to_dict(self):
        return {"chosen": self.chosen, "energy": self.energy,
                "harmonic_energy": self.harmonic_energy,
                "endpoints": [{"index": s.index, "energy": s.energy, "status": s.status,
                               "moves_accepted": s.moves_accepted} for s in self.starts],
                "starts": [s.to_dict() for s in self.starts], "options": dict(self.options)}


# ---------------------------------------------------------------------------
# direct minimization

def _free_nodes(grid):
    return np.flatnonzero(~grid.boundary_mask().ravel())


def harmonic_extension(boundary_data: GridFunction) -> GridFunction:
    """Discrete harmonic function with the given boundary values."""
    grid = boundary_data.grid
    region = ~grid.boundary_mask().ravel()
    x0 = boundary_data.values * grid.boundary_mask()
    prob = DirichletProblem(grid, region, GridFunction(grid, x0), 2.0)
    v, _ = solve_dirichlet(prob, eps_schedule=(1e-12,))
    return v


def _stage_record(k, eps, d, rep, sharp_energy):
    return {"stage": k, "eps": eps, "split": d, "iterations": rep.iterations,
            "grad_norm": rep.grad_norm, "energy": rep.energy, "sharp_energy": sharp_energy,
            "status": rep.status}


def _sharp_total(grid, exps, x):
    return (phase_energy(grid, np.maximum(x, 0.0), exps.p)
            + phase_energy(grid, np.maximum(-x, 0.0), exps.q))


def _relax(grid, exps, x, free, eps, gtol, max_iter):
    obj = DoublePhaseObjective(grid, exps, eps, 0.0)
    return newton(obj.evaluate, obj.value, x, free, gtol=gtol, max_iter=max_iter)


def _neighbors(grid, mask):
    """Nodes sharing a grid edge with ``mask``."""
    m = mask.reshape(grid.shape)
    out = np.zeros_like(m)
    for k in range(grid.dim):
        sl_a = [slice(None)] * grid.dim
        sl_b = [slice(None)] * grid.dim
        sl_a[k], sl_b[k] = slice(1, None), slice(None, -1)
        out[tuple(sl_a)] |= m[tuple(sl_b)]
        out[tuple(sl_b)] |= m[tuple(sl_a)]
    return out.ravel()


def _front_moves(grid, exps, x, free, eps, gtol, opts, rec):
    """Greedy sign flips of whole fronts, kept only when the sharp energy drops."""
    freemask = np.zeros(grid.size, bool)
    freemask[free] = True
    E = _sharp_total(grid, exps, x)
    limit = opts.max_moves if opts.max_moves is not None else 2 * max(grid.n)
    floor = gradient_scale(grid, x) * grid.hmin * 1e-3
    failures = 0
    direction = 0
    while rec.moves_tried < limit and failures < 2:
        sgn = 1.0 if direction == 0 else -1.0
        own = sgn * x > 0
        front = _neighbors(grid, own) & ~own & freemask
        if not front.any():
            failures += 1
            direction ^= 1
            continue
        y = x.copy()
        y[front] = sgn * np.maximum(np.abs(x[front]), floor)
        rec.moves_tried += 1
        y, rep = _relax(grid, exps, y, free, eps, gtol, opts.max_iters)
        Ey = _sharp_total(grid, exps, y)
        if Ey < E - 1e-13 * (1.0 + abs(E)):
            x, E = y, Ey
            rec.moves_accepted += 1
            failures = 0
        else:
            failures += 1
            direction ^= 1
    return x


def _run_start(boundary_data, exps, opts, x0, index):
    grid = boundary_data.grid
    free = _free_nodes(grid)
    rec = StartRecord(index)
    G = gradient_scale(grid, x0)
    h = grid.hmin
    x = x0.copy()
    nst = len(opts.eps_schedule)
    for k, (er, dr) in enumerate(zip(opts.eps_schedule, opts.split_schedule)):
        eps, d = er * G, dr * G * h
        obj = DoublePhaseObjective(grid, exps, eps, d)
        last = k == nst - 1
        E0 = obj.value(x)
        gtol = (opts.final_grad_tol if last else opts.grad_tol) * (1.0 + abs(E0))
        gtol *= h ** (grid.dim - 1)
        try:
            x, rep = newton(obj.evaluate, obj.value, x, free, gtol=gtol,
                            max_iter=opts.max_iters, c1=opts.armijo)
        except SolverError as err:
            rec.status = f"failed at stage {k}: {err}"
            raise SolverError(rec.status, rec) from err
        rec.stages.append(_stage_record(k, eps, d, rep, _sharp_total(grid, exps, x)))
    if opts.front_moves:
        eps = opts.eps_schedule[-1] * G
        gtol = opts.final_grad_tol * (1.0 + abs(_sharp_total(grid, exps, x))) * h ** (grid.dim - 1)
        x = _front_moves(grid, exps, x, free, eps, gtol, opts, rec)
        x, rep = _relax(grid, exps, x, free, eps, gtol, opts.max_iters)
        rec.stages.append(_stage_record(nst, eps, 0.0, rep, _sharp_total(grid, exps, x)))
    rec.energy = _sharp_total(grid, exps, x)
    if not math.isfinite(rec.energy):
        rec.status = "energy not finite"
        raise SolverError(rec.status, rec)
    return x, rec


def _starting_points(boundary_data, harm, opts):
    grid = boundary_data.grid
    interior = ~grid.boundary_mask()
    U = float(np.abs(boundary_data.values[grid.boundary_mask()]).max())
    seeds = np.random.SeedSequence(opts.seed).spawn(opts.multistart)
    starts = [harm.flat.copy()]
    centre = [0.5 * (a + b) for a, b in grid.extents]
    radius = 0.5 * max(b - a for a, b in grid.extents)
    shape = bump(grid, centre, radius).values
    for j in range(1, opts.multistart):
        rng = np.random.default_rng(seeds[j])
        amp = U if U > 0 else 1e-3
        c = 0.3 * (1 if j % 2 else -1) * amp
        noise = 0.05 * amp * rng.standard_normal(grid.shape) * interior
        starts.append((harm.values + c * shape + noise).ravel())
    return starts


def minimize_direct(boundary_data: GridFunction, exps: Exponents, opts: MinimizeOptions = None):
    """Descent from several starts; returns the lowest-energy endpoint.

    Parameters
    ----------
    boundary_data : GridFunction
        Only the values on the grid boundary are used.
    exps : Exponents
    opts : MinimizeOptions, optional

    Returns
    -------
    (GridFunction, MinimizeReport)

    Raises
    ------
    SolverError
        If some stage produces a non-finite energy; the message names the
        start and stage.
    """
    opts = opts or MinimizeOptions()
    grid = boundary_data.grid
    if not np.all(np.isfinite(boundary_data.values)):
        raise ValueError("boundary data must be finite")
    harm = harmonic_extension(boundary_data)
    E_harm = energy(harm, None, exps).total
    starts = _starting_points(boundary_data, harm, opts)
    work = lambda j: _run_start(boundary_data, exps, opts, starts[j], j)
    nthreads = min(thread_count(opts.threads), len(starts))
    if nthreads > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            results = list(pool.map(work, range(len(starts))))
    else:
        results = [work(j) for j in range(len(starts))]
    energies = [rec.energy for _, rec in results]
    best = int(min(range(len(results)), key=lambda j: (energies[j], j)))
    u = GridFunction(grid, results[best][0].reshape(grid.shape))
    report = MinimizeReport(best, energies[best], [rec for _, rec in results], E_harm,
                            _opts_dict(opts))
    return u, report


def _opts_dict(opts):
    d = dict(opts.__dict__)
    d["eps_schedule"] = list(opts.eps_schedule)
    d["split_schedule"] = list(opts.split_schedule)
    return d


# ---------------------------------------------------------------------------
# alternating phase solves

@dataclass
class AlternatingReport:
    sweeps: int
    energies: list
    fallback: bool
    initial_energy: float
    energy: float

    def to_dict(self):
        return dict(self.__dict__)


def minimize_alternating(boundary_data: GridFunction, exps: Exponents, opts: MinimizeOptions = None,
                         initial: GridFunction = None, tol=1e-12, max_sweeps=20):
    """Alternate phase-wise replacements with short interface descents.

    Each sweep freezes the sign pattern, replaces ``u+`` by the p-harmonic
    function on ``{u > 0}`` and ``u-`` by the q-harmonic function on
    ``{u < 0}`` (both vanishing on the rest), merges them, then runs a
    sharp Newton polish and front moves.  Iteration stops once a sweep
    lowers the energy by less than ``tol * (1 + J)``.  An energy increase
    triggers a fallback to :func:`minimize_direct` started from the
    current iterate.

    ``initial`` gives the starting sign pattern; the harmonic extension of
    the boundary data is used when it is omitted.
    """
    opts = opts or MinimizeOptions()
    grid = boundary_data.grid
    bmask = grid.boundary_mask()
    if initial is None:
        u = harmonic_extension(boundary_data).flat.copy()
    else:
        u = np.where(bmask, boundary_data.values, initial.values).ravel()
    free = _free_nodes(grid)
    E0 = _sharp_total(grid, exps, u)
    energies = [E0]
    G = gradient_scale(grid, u)
    eps = opts.eps_schedule[-1] * G
    fallback = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        Eold = energies[-1]
        y = u.copy()
        for sgn, e in ((1.0, exps.p), (-1.0, exps.q)):
            phase = np.maximum(sgn * y, 0.0)
            region = (phase > 0) & ~bmask.ravel()
            if not region.any():
                continue
            prob = DirichletProblem(grid, region, GridFunction(grid, phase.reshape(grid.shape)), e)
            v, _ = solve_dirichlet(prob, tol=1e-12)
            y = np.where(region, sgn * v.flat, y)
        gtol = opts.final_grad_tol * (1.0 + abs(Eold)) * grid.hmin ** (grid.dim - 1)
        y, _ = _relax(grid, exps, y, free, eps, gtol, opts.max_iters)
        if opts.front_moves:
            y = _front_moves(grid, exps, y, free, eps, gtol, opts, StartRecord(0))
        Enew = _sharp_total(grid, exps, y)
        if Enew > Eold + 1e-12 * (1.0 + abs(Eold)):
            fallback = True
            o2 = MinimizeOptions(**{**_opts_dict(opts), "multistart": 1})
            res, rec = _run_start(boundary_data, exps, o2, u, 0)
            u = res
            energies.append(rec.energy)
            break
        u = y
        energies.append(Enew)
        if Eold - Enew < tol * (1.0 + abs(Eold)):
            break
    out = GridFunction(grid, u.reshape(grid.shape))
    return out, AlternatingReport(sweeps, energies, fallback, E0, energies[-1])


# ---------------------------------------------------------------------------
# 1D oracle

@dataclass(frozen=True)
class Oracle1DSolution:
    """Piecewise-linear 1D minimizer on ``[-1, 1]`` with ``u(-1) = -b``, ``u(1) = a``."""
    s_star: float
    alpha: float
    beta: float
    energy: float
    a: float
    b: float
    p: float
    q: float

    def profile(self, x):
        x = np.asarray(x, float)
        return np.where(x >= self.s_star, self.alpha * (x - self.s_star),
                        self.beta * (x - self.s_star))

    def sample(self, grid):
        return GridFunction(grid, self.profile(grid.axes[0]))

    def boundary_data(self, grid):
        v = np.zeros(grid.shape)
        v[0], v[-1] = -self.b, self.a
        return GridFunction(grid, v)

    def to_dict(self):
        return {"s_star": self.s_star, "alpha": self.alpha, "beta": self.beta,
                "energy": self.energy, "a": self.a, "b": self.b, "p": self.p, "q": self.q}


def oracle_energy(s, a, b, exps: Exponents):
    """``a^p (1-s)^(1-p) + b^q (1+s)^(1-q)``."""
    p, q = exps.p, exps.q
    return a ** p * (1.0 - s) ** (1.0 - p) + b ** q * (1.0 + s) ** (1.0 - q)


def oracle_1d(a, b, exps: Exponents) -> Oracle1DSolution:
    """Exact 1D minimizer: the interface ``s*`` balances the two slopes.

    ``s*`` is the unique root in ``(-1, 1)`` of
    ``(p-1) a^p (1-s)^(-p) = (q-1) b^q (1+s)^(-q)``, found by bisection.
    """
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    p, q = exps.p, exps.q
    # bisect in t = log((1+s)/(1-s)) so that both 1-s and 1+s keep full relative precision
    c = math.log(p - 1) + p * math.log(a) - math.log(q - 1) - q * math.log(b)
    log_minus = lambda t: math.log(2.0) - np.logaddexp(0.0, t)   # log(1 - s)
    log_plus = lambda t: math.log(2.0) - np.logaddexp(0.0, -t)   # log(1 + s)
    f = lambda t: c - p * log_minus(t) + q * log_plus(t)
    t = bisect(f, -700.0, 700.0, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=400)
    s = math.tanh(0.5 * t)
    alpha, beta = a / (1.0 - s), b / (1.0 + s)
    return Oracle1DSolution(float(s), alpha, beta, oracle_energy(s, a, b, exps), float(a),
                            float(b), p, q)
