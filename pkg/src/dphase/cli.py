"""Config-driven experiment runner.

Subcommands::

    dphase minimize CONFIG
    dphase verify CONFIG --solution SOLUTION.csv
    dphase oracle1d -a A -b B -p P -q Q
    dphase fam1 -t T -gamma G -rho R -N N
    dphase blowup CONFIG --point X[,Y]

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 failed
acceptance check.  The first failure goes to stderr.
"""
from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .energy import Exponents, energy, local_min_check, rescale
from .errors import DiagnosticError, GammaConditionError, SolverError
from .freeboundary import (balance_residual, blowup_sequence, extract_zero_set, flatness,
                           flux_balance, measure_growth_report, plap_measure, slope_asymptotics)
from .grid import (Ball, GridFunction, make_grid, random_test_function, read_csv, write_csv)
from .minimizer import MinimizeOptions, minimize_alternating, minimize_direct, oracle_1d
from .pharmonic import fam1_radius, weak_form_residual
from .serialize import dumps, validate, write_json
from .verify import (approximation_diagnostics, boundary_distance, check_gamma, gamma_radii,
                     holder_report)

BATTERIES = ("flux", "slopes", "holder", "measure", "flatness", "blowup", "fam1",
             "approximation", "local_min", "subsolution", "scaling")

# section -> key -> (parser, default); a default of ``...`` means required
_FIELDS = {
    "grid": {"dim": ("int", ...), "n": ("ints", ...), "extents": ("extents", None)},
    "exponents": {"p": ("float", ...), "q": ("float", ...)},
    "boundary": {"preset": ("str", ...), "alpha": ("float", 1.0), "beta": ("float", None),
                 "a": ("float", 1.0), "b": ("float", 1.0), "path": ("str", None)},
    "minimizer": {"method": ("str", "direct"), "multistart": ("int", 3),
                  "max_iters": ("int", 200), "front_moves": ("bool", True),
                  "eps_schedule": ("floats", None), "split_schedule": ("floats", None),
                  "threads": ("int", None)},
    "verify": {**{b: ("bool", b != "fam1") for b in BATTERIES},
               "test_count": ("int", 100), "measure_tests": ("int", 200),
               "gamma_points": ("int", 5), "approx_s": ("float", 0.2),
               "approx_r": ("float", 0.4), "fam1_t": ("float", 1.0),
               "fam1_gamma": ("float", 0.25), "fam1_rho": ("float", 0.005),
               "fam1_N": ("int", 4), "fam1_samples": ("int", 129),
               "scaling_draws": ("int", 3)},
    "output": {"directory": ("str", "out")},
    "run": {"seed": ("int", 0)},
}
_PRESETS = ("two_plane", "oracle_1d", "csv")


class ConfigError(ValueError):
    """Configuration problem, located by file line and field when possible."""


@dataclass
class ExperimentConfig:
    path: str
    dim: int
    n: list
    extents: list
    p: float
    q: float
    preset: str
    preset_args: dict
    minimizer: dict
    verify: dict
    output: str
    seed: int
    boundary_csv: str = None
    raw: dict = field(default_factory=dict)

    @property
    def exps(self):
        return Exponents(self.p, self.q)

    def to_dict(self):
        # paths are left out so that the summary does not depend on where it runs
        return {"grid": {"dim": self.dim, "n": list(self.n), "extents": self.extents},
                "exponents": {"p": self.p, "q": self.q},
                "boundary": {"preset": self.preset, **self.preset_args},
                "minimizer": dict(self.minimizer), "verify": dict(self.verify),
                "seed": self.seed}


def _key_line(lines, section, key):
    cur = None
    for i, ln in enumerate(lines, 1):
        s = ln.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
        elif cur == section and s and s[0] not in "#;":
            name = s.split("=", 1)[0].split(":", 1)[0].strip()
            if name.lower() == key.lower():
                return i
    return None


def _convert(kind, text):
    text = text.strip()
    if kind == "str":
        if not text:
            raise ValueError("empty value")
        return text
    if kind == "int":
        return int(text)
    if kind == "float":
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v
    if kind == "bool":
        low = text.lower()
        if low in ("1", "yes", "true", "on"):
            return True
        if low in ("0", "no", "false", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind == "ints":
        return [int(x) for x in text.split(",")]
    if kind == "floats":
        return [float(x) for x in text.split(",")]
    if kind == "extents":
        out = []
        for part in text.split(";"):
            lo, hi = (float(x) for x in part.split(","))
            out.append([lo, hi])
        return out
    raise AssertionError(kind)


def parse_config(path) -> ExperimentConfig:
    """Parse an INI experiment file completely or raise :class:`ConfigError`."""
    if not os.path.isfile(path):
        raise ConfigError(f"{path}: no such file")
    with open(path) as fh:
        text = fh.read()
    lines = text.splitlines()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    def fail(section, key, msg):
        ln = _key_line(lines, section, key) if key else None
        where = f"{path}:{ln}" if ln else path
        raise ConfigError(f"{where}: [{section}] {key or ''}: {msg}".replace(" :", ":"))

    vals = {}
    for sec in cp.sections():
        if sec not in _FIELDS:
            ln = next((i for i, s in enumerate(lines, 1) if s.strip() == f"[{sec}]"), None)
            raise ConfigError(f"{path}:{ln}: unknown section [{sec}]")
        for key in cp[sec]:
            if key not in _FIELDS[sec]:
                fail(sec, key, "unknown field")
    for sec, spec in _FIELDS.items():
        vals[sec] = {}
        for key, (kind, default) in spec.items():
            if cp.has_option(sec, key):
                try:
                    vals[sec][key] = _convert(kind, cp[sec][key])
                except ValueError as exc:
                    fail(sec, key, f"cannot parse {cp[sec][key]!r} ({exc})")
            else:
                vals[sec][key] = default
    bnd = vals["boundary"]
    if bnd["preset"] is ... :
        fail("boundary", "preset", "missing required field")
    preset = bnd["preset"]
    if preset not in _PRESETS:
        fail("boundary", "preset", f"unknown preset {preset!r}; expected one of {', '.join(_PRESETS)}")
    base = os.path.dirname(os.path.abspath(path))
    csv_path = None
    grid = vals["grid"]
    if preset == "csv":
        if bnd["path"] is None:
            fail("boundary", "path", "csv preset needs a path")
        csv_path = os.path.join(base, bnd["path"])
        if not os.path.isfile(csv_path):
            fail("boundary", "path", f"file not found: {bnd['path']}")
        try:
            src = read_csv(csv_path)
        except (ValueError, OSError) as exc:
            fail("boundary", "path", str(exc))
        for key, v in (("dim", src.grid.dim), ("n", list(src.grid.n)),
                       ("extents", [list(e) for e in src.grid.extents])):
            if grid[key] is ...:
                grid[key] = v
    for key in ("dim", "n"):
        if grid[key] is ...:
            fail("grid", key, "missing required field")
    dim, n = grid["dim"], grid["n"]
    if dim not in (1, 2):
        fail("grid", "dim", f"dimension must be 1 or 2, got {dim}")
    if len(n) == 1:
        n = n * dim
    if len(n) != dim or any(k < 3 for k in n):
        fail("grid", "n", f"need {dim} node counts, each at least 3")
    ext = grid["extents"] or [[-1.0, 1.0]] * dim
    if len(ext) != dim or any(not lo < hi for lo, hi in ext):
        fail("grid", "extents", "need one increasing interval per axis")
    for sec, key in (("exponents", "p"), ("exponents", "q")):
        if vals[sec][key] is ...:
            fail(sec, key, "missing required field")
    p, q = vals["exponents"]["p"], vals["exponents"]["q"]
    try:
        Exponents(p, q)
    except ValueError as exc:
        fail("exponents", "q" if p == q else ("p" if not p > 1 else "q"), str(exc))
    if preset == "oracle_1d":
        if dim != 1:
            fail("boundary", "preset", "oracle_1d needs dim = 1")
        if not (bnd["a"] > 0 and bnd["b"] > 0):
            fail("boundary", "a" if not bnd["a"] > 0 else "b", "must be positive")
        pargs = {"a": bnd["a"], "b": bnd["b"]}
    elif preset == "two_plane":
        if not bnd["alpha"] > 0:
            fail("boundary", "alpha", "must be positive")
        beta = bnd["beta"]
        if beta is None:
            beta = ((p - 1.0) * bnd["alpha"] ** p / (q - 1.0)) ** (1.0 / q)
        elif not beta > 0:
            fail("boundary", "beta", "must be positive")
        pargs = {"alpha": bnd["alpha"], "beta": beta}
    else:
        pargs = {"path": bnd["path"]}
    mz = vals["minimizer"]
    if mz["method"] not in ("direct", "alternating"):
        fail("minimizer", "method", "expected direct or alternating")
    try:
        _options(mz, 0)
    except ValueError as exc:
        fail("minimizer", None, str(exc))
    ver = vals["verify"]
    for key in ("test_count", "measure_tests", "gamma_points", "scaling_draws"):
        if ver[key] < 1:
            fail("verify", key, "must be >= 1")
    if not 0 < ver["approx_s"] < ver["approx_r"]:
        fail("verify", "approx_s", "need 0 < approx_s < approx_r")
    return ExperimentConfig(os.path.abspath(path), dim, n, ext, p, q, preset, pargs, mz, ver,
                            os.path.join(base, vals["output"]["directory"]),
                            vals["run"]["seed"], csv_path, vals)


def _options(mz, seed):
    kw = {"multistart": mz["multistart"], "max_iters": mz["max_iters"],
          "front_moves": mz["front_moves"], "threads": mz["threads"], "seed": seed}
    if mz["eps_schedule"] is not None:
        kw["eps_schedule"] = tuple(mz["eps_schedule"])
    if mz["split_schedule"] is not None:
        kw["split_schedule"] = tuple(mz["split_schedule"])
    return MinimizeOptions(**kw)


# ---------------------------------------------------------------------------
# fixtures

def build_grid(cfg: ExperimentConfig):
    return make_grid(cfg.dim, cfg.n, cfg.extents)


def two_plane(grid, alpha, beta):
    """``alpha x_n+ - beta x_n-`` along the last axis."""
    return GridFunction.from_callable(
        grid, lambda *X: alpha * np.maximum(X[-1], 0.0) - beta * np.maximum(-X[-1], 0.0))


def boundary_data(cfg: ExperimentConfig, grid):
    if cfg.preset == "oracle_1d":
        return oracle_1d(cfg.preset_args["a"], cfg.preset_args["b"], cfg.exps).boundary_data(grid)
    if cfg.preset == "two_plane":
        return two_plane(grid, cfg.preset_args["alpha"], cfg.preset_args["beta"])
    src = read_csv(cfg.boundary_csv)
    if src.grid != grid:
        raise ConfigError(f"{cfg.boundary_csv}: grid does not match the [grid] section")
    return src


def interface_point(u: GridFunction):
    """Zero-set point closest to the middle of the domain."""
    ls = extract_zero_set(u)
    if ls.empty:
        raise DiagnosticError("solution has no interface")
    mid = np.array([0.5 * (a + b) for a, b in u.grid.extents])
    return ls.points[int(np.argmin(np.linalg.norm(ls.points - mid, axis=1)))], ls


def interface_normal(u: GridFunction, z):
    """Unit vector towards the positive phase at ``z``."""
    grid = u.grid
    if grid.dim == 1:
        return np.array([1.0 if u.flat[-1] >= u.flat[0] else -1.0])
    gx, gy = np.gradient(u.values, *grid.h, edge_order=2)
    X = grid.coords()
    sel = np.linalg.norm(X - z, axis=1) <= 4 * grid.hmin
    v = np.array([gx.ravel()[sel].mean(), gy.ravel()[sel].mean()])
    return v / np.linalg.norm(v)


def gamma_points(u: GridFunction, ls, count):
    """Vanishing points spread along the interface, topped up with nodes next to it."""
    grid = u.grid
    span = min(b - a for a, b in grid.extents)
    pts = [p for p in ls.points if boundary_distance(grid, p) >= 0.25 * span]
    chosen = []
    if pts:
        pts = np.asarray(pts)
        mid = np.array([0.5 * (a + b) for a, b in grid.extents])
        chosen.append(pts[int(np.argmin(np.linalg.norm(pts - mid, axis=1)))])
        d = np.linalg.norm(pts - chosen[0], axis=1)
        while len(chosen) < count and d.max() > 2 * grid.hmin:
            k = int(np.argmax(d))
            chosen.append(pts[k])
            d = np.minimum(d, np.linalg.norm(pts - pts[k], axis=1))
    if len(chosen) < count and chosen:
        X = grid.coords()
        order = np.argsort(np.linalg.norm(X - chosen[0], axis=1))
        for k in order[1:8 * count]:
            if len(chosen) >= count:
                break
            try:
                check_gamma(u, X[k], gamma_radii(grid, X[k]))
            except GammaConditionError:
                continue
            chosen.append(X[k])
    return [np.asarray(c, float) for c in chosen]


# ---------------------------------------------------------------------------
# batteries

def _check(passed, value, threshold, note=None):
    out = {"passed": bool(passed), "value": value, "threshold": threshold}
    if note:
        out["note"] = note
    return out


class Runner:
    """Runs minimization and the enabled batteries, collecting checks and artifacts."""

    def __init__(self, cfg: ExperimentConfig, outdir=None):
        self.cfg = cfg
        self.exps = cfg.exps
        self.out = outdir or cfg.output
        self.checks = {}
        self.artifacts = []
        self.reports = {}
        self.seeds = np.random.SeedSequence(cfg.seed).spawn(len(BATTERIES) + 1)

    def rng(self, name):
        return np.random.default_rng(self.seeds[1 + BATTERIES.index(name)])

    def path(self, name):
        self.artifacts.append(name)
        return os.path.join(self.out, name)

    def emit(self, name, report, schema):
        write_json(self.path(f"{name}.json"), report, schema)
        self.reports[name] = report

    # -- solution -------------------------------------------------------
    def minimize(self, bd):
        cfg = self.cfg
        opts = _options(cfg.minimizer, int(self.seeds[0].generate_state(1)[0]))
        if cfg.minimizer["method"] == "alternating":
            u, rep = minimize_alternating(bd, self.exps, opts)
        else:
            u, rep = minimize_direct(bd, self.exps, opts)
        self.emit("minimize", {"method": cfg.minimizer["method"], **rep.to_dict()}, "minimize")
        write_csv(u, self.path("solution.csv"))
        return u, rep.energy

    def oracle_checks(self, u, E, z):
        cfg, grid = self.cfg, u.grid
        if cfg.preset == "oracle_1d":
            o = oracle_1d(cfg.preset_args["a"], cfg.preset_args["b"], self.exps)
            dz = abs(float(z[0]) - o.s_star)
            rel = abs(E - o.energy) / o.energy
            self.checks["oracle_free_point"] = _check(dz <= 2 * grid.hmin, dz, 2 * grid.hmin)
            self.checks["oracle_energy"] = _check(rel <= 1e-3, rel, 1e-3)
            return {"s_star": o.s_star, "energy_exact": o.energy}
        if cfg.preset == "two_plane":
            a, b = cfg.preset_args["alpha"], cfg.preset_args["beta"]
            err = float(np.abs(u.values - two_plane(grid, a, b).values).max())
            tol = 2 * max(a, b) * grid.hmin
            self.checks["two_plane_sup_error"] = _check(err <= tol, err, tol)
            return {"sup_error": err}
        return {}

    # -- batteries --------------------------------------------------------
    def flux(self, u):
        rep = flux_balance(u, self.exps)
        self.emit("flux", rep, "flux")
        with open(self.path("flux_levels.csv"), "w") as fh:
            fh.write("test,side,level,integral\n")
            for k, t in enumerate(rep.tests):
                for side in ("p", "q"):
                    for lev, val in zip(t[f"levels_{side}"], t[f"integrals_{side}"]):
                        fh.write(f"{k},{side},{lev!r},{val!r}\n")
                    fh.write(f"{k},{side},0.0,{t[f'extrapolated_{side}']!r}\n")
        self.checks["flux_balance"] = _check(rep.residual <= 0.05, rep.residual, 0.05)

    def slopes(self, u, z, nu):
        sp = slope_asymptotics(u, z, nu, exps=self.exps)
        self.emit("slopes", sp, "slopes")
        self.checks["slope_balance"] = _check(sp.balance_residual <= 0.05, sp.balance_residual, 0.05)

    def holder(self, u, ls):
        grid = u.grid
        want = self.cfg.verify["gamma_points"]
        pts = gamma_points(u, ls, want)
        # pair count grows like |K|^2, so keep the box modest
        K = [[0.5 * (a + b) - 0.125 * (b - a), 0.5 * (a + b) + 0.125 * (b - a)]
             for a, b in grid.extents]
        reports, worst_ratio, exps_fit = [], 0.0, []
        for k, z in enumerate(pts):
            rep = holder_report(u, z, [0.25, 0.5, 0.75, 1.0] if k == 0 else [],
                                K, self.exps)
            if k == 0:
                rep.write_decay_csv(self.path("holder_decay.csv"))
            reports.append(rep.to_dict())
            worst_ratio = max([worst_ratio] + rep.decay_plus)
            exps_fit.append(rep.exponent_plus)
        self.emit("holder", {"points": reports}, "holder")
        self.checks["gamma_points"] = _check(len(pts) >= want, len(pts), want)
        self.checks["holder_decay"] = _check(worst_ratio <= 0.95 + 1e-12, worst_ratio, 0.95)
        lo, hi = (min(exps_fit), max(exps_fit)) if exps_fit else (math.nan, math.nan)
        self.checks["holder_exponent"] = _check(lo > 0 and hi <= 1.05, [lo, hi], [0.0, 1.05])

    def measure(self, u, ls, z):
        grid = u.grid
        up = GridFunction(grid, np.maximum(u.values, 0.0))
        rng = self.rng("measure")
        count = self.cfg.verify["measure_tests"]
        neg, far = [], []
        X = grid.coords()
        tree = cKDTree(ls.points)
        tries = 0
        while (len(neg) < count or len(far) < count) and tries < 20 * count:
            tries += 1
            phi = random_test_function(grid, rng, nonnegative=True)
            val = plap_measure(up, self.exps.p, phi)
            if len(neg) < count:
                neg.append(val)
            supp = np.flatnonzero(phi.values.ravel() > 0)
            dist = float(tree.query(X[supp])[0].min()) if supp.size else math.inf
            if dist >= 2 * grid.hmin and len(far) < count:
                far.append(val)
        grow = measure_growth_report(up, self.exps.p, z)
        self.emit("measure", {"nonnegativity_tests": neg, "support_tests": far,
                              "growth": grow.to_dict()}, "measure")
        mn = min(neg)
        self.checks["measure_nonnegative"] = _check(mn >= -1e-10, mn, -1e-10)
        sup = max((abs(v) for v in far), default=0.0)
        self.checks["measure_support"] = _check(
            sup <= 1e-10 and len(far) > 0, sup, 1e-10,
            None if far else "no test support avoided the interface")
        self.checks["measure_growth_band"] = _check(not grow.flagged, len(grow.flagged), 0)

    def flatness(self, u, ls, z):
        grid = u.grid
        r = 0.5 * boundary_distance(grid, z)
        rep = flatness(ls, z, r)
        ls.write_csv(self.path("levelset.csv"))
        self.emit("flatness", rep, "flatness")

    def blowup(self, u, z, radii=None):
        """Blow-ups of the solution; for the oracle preset also of the exact profile.

        The gap and limit-balance thresholds apply to the exact 1D profile.
        On a discrete minimizer the interface cell carries the slope
        ``alpha + beta``, which leaves an O(h/r) kink in every rescaling, so
        only its normalization is checked.
        """
        grid = u.grid
        if radii is None:
            r = min(0.4, 0.45 * boundary_distance(grid, z))
            radii = [r * 0.5 ** k for k in range(3) if r * 0.5 ** k >= 4 * grid.hmin]
        if len(radii) < 2:
            self.checks["blowup_normalization"] = _check(False, None, 1e-9,
                                                         "fewer than two admissible radii")
            return None
        _, rep = blowup_sequence(u, z, radii, self.exps)
        exact = None
        if self.cfg.preset == "oracle_1d":
            o = oracle_1d(self.cfg.preset_args["a"], self.cfg.preset_args["b"], self.exps)
            w = o.sample(grid)
            zo, _ = interface_point(w)
            _, exact = blowup_sequence(w, zo, radii, self.exps)
        self.emit("blowup", {"solution": rep, "oracle": exact}, "blowup")
        err = max(rep.normalization_error, exact.normalization_error if exact else 0.0)
        self.checks["blowup_normalization"] = _check(err <= 1e-9, err, 1e-9)
        if exact is not None:
            self.checks["blowup_gap"] = _check(exact.last_gap <= 1e-2, exact.last_gap, 1e-2)
            br = exact.limit_slopes["balance_residual"]
            self.checks["blowup_balance"] = _check(br <= 0.02, br, 0.02)
        return rep

    def fam1(self):
        v = self.cfg.verify
        _, rep = fam1_radius(v["fam1_t"], v["fam1_gamma"], v["fam1_rho"], v["fam1_N"],
                             p=self.exps.p, q=self.exps.q, samples=v["fam1_samples"])
        self.emit("fam1", rep, "fam1")
        self.checks["fam1_violations"] = _check(rep.total_violations == 0, rep.total_violations, 0)

    def approximation(self, u, z):
        v = self.cfg.verify
        s, r = v["approx_s"], v["approx_r"]
        if not Ball(tuple(z), r).inside(u.grid):
            self.checks["approximation_finite"] = _check(False, None, None,
                                                         "B_r(z) leaves the grid")
            return
        rep = approximation_diagnostics(u, self.exps, z, s, r)
        self.emit("approximation", rep, "approximation")
        ok = all(math.isfinite(rep[k]) for k in ("basic1_ratio", "basic2_ratio"))
        self.checks["approximation_finite"] = _check(
            ok, [rep["basic1_ratio"], rep["basic2_ratio"]], None)

    def local_min(self, u):
        rep = local_min_check(u, self.exps, seed=int(self.rng("local_min").integers(2 ** 31)))
        self.emit("local_min", rep, "local_min")
        self.checks["local_min"] = _check(rep.passed, rep.max_energy_drop, rep.tolerance)

    def subsolution(self, u):
        grid = u.grid
        rng = self.rng("subsolution")
        tests = [random_test_function(grid, rng, nonnegative=True)
                 for _ in range(self.cfg.verify["test_count"])]
        rp = weak_form_residual(GridFunction(grid, np.maximum(u.values, 0.0)), self.exps.p, tests)
        rm = weak_form_residual(GridFunction(grid, np.maximum(-u.values, 0.0)), self.exps.q, tests)
        self.emit("subsolution", {"positive_phase": rp, "negative_phase": rm}, "subsolution")
        self.checks["subsolution_positive"] = _check(max(rp) <= 1e-8, max(rp), 1e-8)
        self.checks["subsolution_negative"] = _check(max(rm) <= 1e-8, max(rm), 1e-8)

    def scaling(self, u, z):
        grid = u.grid
        rng = self.rng("scaling")
        X = grid.coords()
        draws = []
        umax = float(np.abs(u.values).max())
        for _ in range(self.cfg.verify["scaling_draws"]):
            dz = boundary_distance(grid, z)
            k = int(np.argmin(np.linalg.norm(X - z + rng.uniform(-0.1, 0.1, grid.dim) * dz, axis=1)))
            c = X[k]
            rmax = int(0.5 * boundary_distance(grid, c) / grid.hmin)
            m = int(rng.integers(max(4, rmax // 4), max(5, rmax + 1)))
            S = float(umax * rng.uniform(0.5, 2.0))
            w = rescale(u, Ball(tuple(c), m * grid.hmin), S, self.exps)
            rep = local_min_check(w, self.exps, seed=int(rng.integers(2 ** 31)))
            draws.append({"center": c, "radius": m * grid.hmin, "S": S, "check": rep.to_dict()})
        self.emit("scaling", {"draws": draws}, "scaling")
        ok = all(d["check"]["passed"] for d in draws)
        worst = max(d["check"]["max_energy_drop"] for d in draws)
        self.checks["scaling_local_min"] = _check(ok, worst, None)

    # -- driver ---------------------------------------------------------
    def run(self, u=None):
        cfg = self.cfg
        os.makedirs(self.out, exist_ok=True)
        grid = build_grid(cfg)
        bd = boundary_data(cfg, grid)
        if u is None:
            u, E = self.minimize(bd)
        else:
            if u.grid != grid:
                raise ConfigError("solution grid does not match the config grid")
            E = energy(u, None, self.exps).total
        z, ls = interface_point(u)
        nu = interface_normal(u, z)
        info = {"energy": E, "free_point": z, "normal": nu}
        if grid.dim == 1:
            info["s_discrete"] = float(z[0])
        info.update(self.oracle_checks(u, E, z))
        on = cfg.verify
        if on["flux"]:
            self.flux(u)
        if on["slopes"]:
            self.slopes(u, z, nu)
        if on["holder"]:
            self.holder(u, ls)
        if on["measure"]:
            self.measure(u, ls, z)
        if on["flatness"]:
            self.flatness(u, ls, z)
        if on["blowup"]:
            self.blowup(u, z)
        if on["fam1"]:
            self.fam1()
        if on["approximation"]:
            self.approximation(u, z)
        if on["local_min"]:
            self.local_min(u)
        if on["subsolution"]:
            self.subsolution(u)
        if on["scaling"]:
            self.scaling(u, z)
        summary = {"config": cfg.to_dict(), "info": info, "checks": self.checks,
                   "passed": all(c["passed"] for c in self.checks.values()),
                   "artifacts": sorted(set(self.artifacts + ["summary.json"]))}
        write_json(os.path.join(self.out, "summary.json"), summary, "summary")
        return summary


# ---------------------------------------------------------------------------
# entry points

def _fail(code, msg):
    print(f"error: {msg}", file=sys.stderr)
    return code


def _first_failure(summary):
    for name, c in summary["checks"].items():
        if not c["passed"]:
            return f"acceptance check {name} failed (value {c['value']!r}, threshold {c['threshold']!r})"
    return None


def run_config(path, solution=None, outdir=None):
    """Run the experiment in ``path``; returns the process exit code."""
    try:
        cfg = parse_config(path)
        u = None
        if solution is not None:
            if not os.path.isfile(solution):
                raise ConfigError(f"{solution}: no such file")
            try:
                u = read_csv(solution)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        summary = Runner(cfg, outdir).run(u)
    except ConfigError as exc:
        return _fail(1, str(exc))
    except (SolverError, DiagnosticError) as exc:
        return _fail(2, f"{type(exc).__name__}: {exc}")
    msg = _first_failure(summary)
    return _fail(3, msg) if msg else 0


def _point(text):
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad point {text!r}") from None


def _run_blowup(args):
    try:
        cfg = parse_config(args.config)
        grid = build_grid(cfg)
        if len(args.point) != grid.dim:
            raise ConfigError(f"--point needs {grid.dim} coordinate(s)")
        runner = Runner(cfg, args.out)
        os.makedirs(runner.out, exist_ok=True)
        if args.solution:
            if not os.path.isfile(args.solution):
                raise ConfigError(f"{args.solution}: no such file")
            u = read_csv(args.solution)
        else:
            u, _ = runner.minimize(boundary_data(cfg, grid))
        try:
            rep = runner.blowup(u, args.point, args.radii)
        except DiagnosticError as exc:
            if "free boundary" in str(exc):
                raise ConfigError(str(exc)) from None
            raise
    except ConfigError as exc:
        return _fail(1, str(exc))
    except (SolverError, DiagnosticError) as exc:
        return _fail(2, f"{type(exc).__name__}: {exc}")
    if rep is not None:
        sys.stdout.write(dumps(rep))
    summary = {"checks": runner.checks}
    msg = _first_failure(summary)
    return _fail(3, msg) if msg else 0


def build_parser():
    ap = argparse.ArgumentParser(prog="dphase", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    m = sub.add_parser("minimize", help="minimize and run the enabled batteries")
    m.add_argument("config")
    m.add_argument("--out", help="output directory (overrides the config)")
    v = sub.add_parser("verify", help="run the batteries on a stored solution")
    v.add_argument("config")
    v.add_argument("--solution", required=True)
    v.add_argument("--out")
    o = sub.add_parser("oracle1d", help="exact 1D minimizer")
    o.add_argument("-a", type=float, required=True)
    o.add_argument("-b", type=float, required=True)
    o.add_argument("-p", type=float, required=True)
    o.add_argument("-q", type=float, required=True)
    f = sub.add_parser("fam1", help="radius family and its pointwise check")
    f.add_argument("-t", type=float, required=True)
    f.add_argument("-gamma", type=float, required=True)
    f.add_argument("-rho", type=float, required=True)
    f.add_argument("-N", type=int, required=True)
    f.add_argument("-p", type=float, default=3.0)
    f.add_argument("-q", type=float, default=2.0)
    f.add_argument("--samples", type=int, default=129)
    b = sub.add_parser("blowup", help="blow-up sequence at a free-boundary point")
    b.add_argument("config")
    b.add_argument("--point", type=_point, required=True)
    b.add_argument("--radii", type=lambda s: [float(x) for x in s.split(",")])
    b.add_argument("--solution")
    b.add_argument("--out")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.cmd == "minimize":
        return run_config(args.config, None, args.out)
    if args.cmd == "verify":
        return run_config(args.config, args.solution, args.out)
    if args.cmd == "oracle1d":
        try:
            sol = oracle_1d(args.a, args.b, Exponents(args.p, args.q))
        except ValueError as exc:
            return _fail(1, str(exc))
        data = sol.to_dict()
        data["balance_residual"] = balance_residual(sol.alpha, sol.beta, Exponents(args.p, args.q))
        validate(data, "oracle1d")
        sys.stdout.write(dumps(data))
        return 0
    if args.cmd == "fam1":
        try:
            _, rep = fam1_radius(args.t, args.gamma, args.rho, args.N, p=args.p, q=args.q,
                                 samples=args.samples)
        except ValueError as exc:
            return _fail(1, str(exc))
        validate(rep.to_dict(), "fam1")
        sys.stdout.write(dumps(rep))
        return 0 if rep.total_violations == 0 else _fail(
            3, f"{rep.total_violations} fam1 condition violations")
    if args.cmd == "blowup":
        return _run_blowup(args)
    return 1
