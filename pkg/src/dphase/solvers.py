"""Damped Newton iteration shared by the p-harmonic and double-phase solvers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import cell_gradients, difference_operators
from .errors import SolverError


def phase_terms(grid, w, e, eps):
    """Energy, gradient and Hessian of one smoothed phase with respect to ``w``.

    Returns ``(E, grad, H)`` where ``H`` is the exact (positive semidefinite)
    Hessian of the convex cell energy.
    """
    ops = difference_operators(grid)
    g = cell_gradients(grid, w)
    s = (g * g).sum(axis=0) + eps * eps
    vol = grid.cell_volume
    if eps > 0:
        E = vol * float(((s ** (0.5 * e)) - eps ** e).sum())
    else:
        E = vol * float((s ** (0.5 * e)).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(s > 0, s ** (0.5 * e - 1.0), 0.0)
        b = np.where(s > 0, (e - 2.0) * a / s, 0.0)
    flux = e * vol * a * g
    grad = np.zeros(grid.size)
    for D, fk in zip(ops, flux):
        grad += D.T @ fk
    H = None
    dim = grid.dim
    for k in range(dim):
        for l in range(dim):
            c = e * vol * (b * g[k] * g[l] + (a if k == l else 0.0))
            term = ops[k].T @ sp.diags(c) @ ops[l]
            H = term if H is None else H + term
    return E, grad, H.tocsr()


def _symmetric_solve(A, b):
    # minimum-degree ordering on A + A^T with diagonal pivots suits these stencils
    try:
        lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
        return lu.solve(b)
    except RuntimeError:
        return np.full(b.shape, np.nan)


@dataclass
class NewtonReport:
    iterations: int = 0
    grad_norm: float = np.inf
    energy: float = np.inf
    converged: bool = False
    status: str = ""
    energies: list = field(default_factory=list)

    def to_dict(self):
        return {"iterations": self.iterations, "grad_norm": self.grad_norm,
                "energy": self.energy, "converged": self.converged, "status": self.status}


def newton(evaluate, value, x0, free, gtol, max_iter=200, c1=1e-4, max_halvings=60):
    """Minimize with damped Newton steps on the ``free`` entries of ``x``.

    Parameters
    ----------
    evaluate : callable
        ``x -> (E, grad, H)`` with full-length gradient and sparse Hessian.
    value : callable
        ``x -> E`` used in the line search.
    x0 : ndarray
        Starting point; entries outside ``free`` stay fixed.
    free : ndarray of int
        Indices of the unknowns.
    gtol : float
        Stop when the max-norm of the free gradient is at most ``gtol``.

    Energies are nonincreasing by construction (Armijo backtracking); a
    violation raises :class:`SolverError`.
    """
    x = np.array(x0, dtype=float)
    rep = NewtonReport()
    if free.size == 0:
        rep.energy = value(x)
        rep.grad_norm = 0.0
        rep.converged = True
        rep.status = "no unknowns"
        return x, rep
    mu = 0.0
    flat = 0
    E, g, H = evaluate(x)
    rep.energies.append(E)
    for it in range(max_iter + 1):
        if not np.isfinite(E):
            raise SolverError("energy is not finite", rep)
        gf = g[free]
        gn = float(np.abs(gf).max())
        rep.iterations, rep.grad_norm, rep.energy = it, gn, E
        if gn <= gtol:
            rep.converged = True
            rep.status = "gradient tolerance"
            break
        if it == max_iter:
            rep.status = "iteration limit"
            break
        Hf = H[free][:, free].tocsc()
        dscale = float(np.abs(Hf.diagonal()).max()) or 1.0
        accepted = False
        for _ in range(12):
            A = Hf + sp.identity(free.size, format="csc") * (mu * dscale + 1e-14 * dscale)
            d = _symmetric_solve(A, -gf)
            slope = float(gf @ d)
            if not np.all(np.isfinite(d)) or slope >= 0:
                mu = max(10 * mu, 1e-8)
                continue
            t = 1.0
            for _ in range(max_halvings):
                xt = x.copy()
                xt[free] += t * d
                Et = value(xt)
                if np.isfinite(Et) and Et <= E + c1 * t * slope:
                    accepted = True
                    break
                t *= 0.5
            if accepted:
                break
            mu = max(10 * mu, 1e-8)
        if not accepted:
            rep.status = "line search stalled"
            break
        mu = mu * 0.1 if mu > 1e-12 else 0.0
        if Et > E:
            raise SolverError("energy increased during descent", rep)
        flat = flat + 1 if E - Et <= 4e-16 * abs(E) else 0
        x = xt
        E, g, H = evaluate(x)
        rep.energies.append(E)
        if flat >= 3:
            gn = float(np.abs(g[free]).max())
            rep.iterations, rep.grad_norm, rep.energy = it + 1, gn, E
            rep.converged = gn <= 100 * gtol
            rep.status = "roundoff stagnation"
            break
    return x, rep
