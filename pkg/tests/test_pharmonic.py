import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dphase import Ball, GridFunction, TestFunction, make_grid, split
from dphase.grid import nodes_in_ball, random_test_function
from dphase.pharmonic import (DirichletProblem, classical_ratios, discrete_boundary, fam1_radius,
                              p_harmonic_replace, pucci_pq, sample_admissible, solve_dirichlet,
                              sup_convolution, weak_form_residual)
from dphase.solvers import SolverError

from helpers import solve_1d


def _restricted_tests(grid, mask, rng, count):
    """Random nonnegative and signed tests whose support lies in ``mask``."""
    out = []
    while len(out) < count:
        phi = random_test_function(grid, rng, nonnegative=bool(len(out) % 2))
        v = phi.values * mask.reshape(grid.shape)
        if v.any():
            out.append(TestFunction(GridFunction(grid, v)))
    return out


# ---------------------------------------------------------------------------
# p-harmonic replacement

@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.5])
def test_replace_keeps_affine(p):
    g = make_grid(2, [21, 17], [[-1, 1], [0, 1]])
    u = GridFunction.from_callable(g, lambda X, Y: 0.3 - 1.2 * X + 0.7 * Y)
    v = p_harmonic_replace(u, Ball([0.1, 0.5], 0.4), p)
    assert np.allclose(v.values, u.values, atol=1e-12)


def test_replace_p2_in_1d_is_linear_interpolation():
    g = make_grid(1, [41], [[0, 1]])
    x = g.axes[0]
    u = GridFunction(g, np.sin(7 * x))
    v = p_harmonic_replace(u, Ball([0.5], 0.3), 2.0)
    idx = nodes_in_ball(g, Ball([0.5], 0.3))
    lo, hi = idx.min() - 1, idx.max() + 1
    t = (x[idx] - x[lo]) / (x[hi] - x[lo])
    want = (1 - t) * u.values[lo] + t * u.values[hi]
    assert np.allclose(v.values[idx], want, atol=1e-12)
    outside = np.setdiff1d(np.arange(g.size), idx)
    assert np.array_equal(v.values[outside], u.values[outside])


def test_replace_p3_unit_interval():
    g = make_grid(1, [51], [[0, 1]])
    u = GridFunction(g, np.where(g.axes[0] < 1, 0.0, 1.0))
    interior = np.arange(1, 50)
    v = p_harmonic_replace(u, interior, 3.0)
    assert np.allclose(v.values, g.axes[0], atol=1e-10)


def test_replace_report_and_region_checks():
    g = make_grid(2, [15, 15], [[-1, 1], [-1, 1]])
    u = GridFunction.from_callable(g, lambda X, Y: X * Y)
    v, rep = p_harmonic_replace(u, Ball([0, 0], 0.6), 3.0, full_output=True)
    d = rep.to_dict()
    assert d["converged"] and len(d["eps_trace"]) >= 2
    assert d["final_grad_norm"] <= 1e-6
    with pytest.raises(ValueError):
        p_harmonic_replace(u, Ball([0, 0], 1.5), 3.0)
    with pytest.raises(ValueError):
        p_harmonic_replace(u, Ball([0, 0], 0.5), 1.0)


def test_replace_failure_carries_report():
    g = make_grid(2, [25, 25], [[-1, 1], [-1, 1]])
    u = GridFunction.from_callable(g, lambda X, Y: np.abs(X) ** 0.3 * np.sign(Y))
    with pytest.raises(SolverError) as info:
        p_harmonic_replace(u, Ball([0, 0], 0.8), 4.0, max_iter=1, eps_schedule=(1e-12,))
    assert info.value.report is not None


def test_discrete_boundary_of_interval():
    g = make_grid(1, [9], [[0, 1]])
    m = np.zeros(9, bool)
    m[3:6] = True
    assert np.flatnonzero(discrete_boundary(g, m)).tolist() == [2, 6]


@pytest.mark.parametrize("p", [1.5, 2.5, 4.0])
def test_replacement_is_discrete_p_harmonic(p):
    rng = np.random.default_rng(int(10 * p))
    g = make_grid(2, [25, 25], [[-1, 1], [-1, 1]])
    u = GridFunction(g, rng.standard_normal(g.shape))
    region = Ball([0.05, -0.1], 0.7)
    v = p_harmonic_replace(u, region, p)
    mask = DirichletProblem(g, region, u, p).region
    res = weak_form_residual(v, p, _restricted_tests(g, mask, rng, 40))
    assert max(abs(r) for r in res) <= 1e-8


def test_comparison_principle_random_pairs():
    rng = np.random.default_rng(50)
    for k in range(50):
        p = rng.uniform(1.3, 4.0)
        if k % 2:
            g = make_grid(1, [31], [[0, 1]])
            region = np.arange(1, 30)
        else:
            g = make_grid(2, [11, 11], [[-1, 1], [-1, 1]])
            region = Ball([0.0, 0.0], 0.75)
        b = rng.standard_normal(g.shape)
        a = b + rng.uniform(0.0, 1.0, g.shape)
        va = p_harmonic_replace(GridFunction(g, a), region, p)
        vb = p_harmonic_replace(GridFunction(g, b), region, p)
        assert np.all(va.values >= vb.values - 1e-9)


def test_solve_dirichlet_from_initial_guess():
    g = make_grid(1, [21], [[0, 1]])
    u = GridFunction(g, g.axes[0] ** 2)
    prob = DirichletProblem(g, np.arange(1, 20), u, 2.5)
    v, rep = solve_dirichlet(prob, x0=np.zeros(21) + u.values * (g.boundary_mask()))
    assert rep.converged
    assert np.allclose(v.values, g.axes[0], atol=1e-9)


# ---------------------------------------------------------------------------
# weak-form residual

@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), p=st.floats(1.1, 5.0))
def test_weak_residual_vanishes_for_affine(seed, p):
    rng = np.random.default_rng(seed)
    g = make_grid(2, [13, 9], [[-1, 1], [0, 1]])
    c = rng.uniform(-2, 2, 3)
    u = GridFunction.from_callable(g, lambda X, Y: c[0] + c[1] * X + c[2] * Y)
    tests = [random_test_function(g, rng, nonnegative=False) for _ in range(5)]
    assert max(abs(r) for r in weak_form_residual(u, p, tests)) <= 1e-12


def test_weak_residual_sign_at_concave_kink():
    g = make_grid(1, [3], [[-1, 1]])
    u = GridFunction(g, np.abs(g.axes[0]))
    phi = TestFunction(GridFunction(g, [0.0, 1.0, 0.0]))
    # cells: gradient -1 then +1, test slopes +1 then -1, each weighted by h = 1
    assert weak_form_residual(u, 2.0, [phi]) == [-2.0]


def test_minimizer_positive_phase_is_subsolution():
    u, _, _ = solve_1d(1.0, 1.0, 3.0, 2.0, 2001)
    rng = np.random.default_rng(5)
    up = split(u).uplus
    tests = [random_test_function(u.grid, rng) for _ in range(100)]
    assert max(weak_form_residual(up, 3.0, tests)) <= 1e-8


# ---------------------------------------------------------------------------
# classical ratios

def test_classical_ratios_constant():
    g = make_grid(2, [33, 33], [[-1, 1], [-1, 1]])
    r = classical_ratios(GridFunction(g, np.ones(g.shape)), 2.5, [0, 0], 0.3, 0.6)
    assert r["harnack"] == 1.0
    assert r["caccioppoli"] == 0.0
    assert r["harnack_geometric"] == pytest.approx(1.0)


def test_caccioppoli_ratio_stable_under_refinement():
    vals = []
    for n in (41, 81):
        g = make_grid(2, [n, n], [[-1, 1], [-1, 1]])
        v = GridFunction.from_callable(g, lambda X, Y: 2.0 + 0.5 * X - 0.25 * Y)
        vals.append(classical_ratios(v, 3.0, [0.0, 0.0], 0.3, 0.7)["caccioppoli"])
    assert all(np.isfinite(vals)) and vals[0] > 0
    assert 0.5 <= vals[1] / vals[0] <= 2.0


def test_classical_ratios_on_replacement():
    rng = np.random.default_rng(9)
    g = make_grid(2, [33, 33], [[-1, 1], [-1, 1]])
    u = GridFunction(g, 1.0 + rng.random(g.shape))
    v = p_harmonic_replace(u, Ball([0, 0], 0.8), 2.5)
    r = classical_ratios(v, 2.5, [0.0, 0.0], 0.25, 0.5)
    assert all(np.isfinite(r[k]) for k in ("caccioppoli", "locmax", "harnack"))


def test_classical_ratios_errors():
    g = make_grid(2, [17, 17], [[-1, 1], [-1, 1]])
    v = GridFunction.from_callable(g, lambda X, Y: X)
    with pytest.raises(ValueError, match="v > 0"):
        classical_ratios(v, 2.0, [0, 0], 0.2, 0.4)
    with pytest.raises(ValueError):
        classical_ratios(v + 5.0, 2.0, [0, 0], 0.4, 0.2)
    with pytest.raises(ValueError):
        classical_ratios(v + 5.0, 2.0, [0.8, 0], 0.2, 0.4)


# ---------------------------------------------------------------------------
# sup-convolution

def test_sup_convolution_tiny_radius_is_identity():
    rng = np.random.default_rng(0)
    g = make_grid(2, [12, 10], [[0, 1], [0, 1]])
    u = GridFunction(g, rng.standard_normal(g.shape))
    v = sup_convolution(u, 0.5 * g.hmin, clip=True)
    assert np.array_equal(v.values, u.values)


def test_sup_convolution_of_identity_map():
    g = make_grid(1, [41], [[-1, 1]])
    x = g.axes[0]
    v = sup_convolution(GridFunction(g, x), 0.25, clip=True)
    assert np.allclose(v.values, np.minimum(x + 0.25, 1.0), atol=1e-15)


def test_sup_convolution_rejects_bad_radii():
    g = make_grid(1, [41], [[-1, 1]])
    u = GridFunction(g, g.axes[0])
    with pytest.raises(ValueError, match="positive"):
        sup_convolution(u, GridFunction(g, np.zeros(41)))
    with pytest.raises(ValueError, match="escapes"):
        sup_convolution(u, 0.25)
    inner = GridFunction(g, np.maximum(1e-13, 0.9 * (1 - np.abs(g.axes[0]))))
    assert np.all(sup_convolution(u, inner).values >= u.values)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), dim=st.sampled_from([1, 2]))
def test_sup_convolution_monotone_and_dominating(seed, dim):
    rng = np.random.default_rng(seed)
    g = make_grid(1, [40], [[0, 1]]) if dim == 1 else make_grid(2, [14, 11], [[0, 1], [0, 2]])
    u = GridFunction(g, rng.standard_normal(g.shape))
    w = GridFunction(g, u.values + rng.random(g.shape))
    r1 = rng.uniform(0.01, 0.3, g.shape)
    r2 = r1 + rng.uniform(0.0, 0.2, g.shape)
    v1 = sup_convolution(u, GridFunction(g, r1), clip=True).values
    v2 = sup_convolution(u, GridFunction(g, r2), clip=True).values
    vw = sup_convolution(w, GridFunction(g, r1), clip=True).values
    assert np.all(v1 >= u.values)
    assert np.all(v2 >= v1)
    assert np.all(vw >= v1)


# ---------------------------------------------------------------------------
# extremal operator

def test_pucci_examples():
    assert pucci_pq(np.eye(2), 3.0, 2.0) == 2.0
    assert pucci_pq(np.diag([1.0, -1.0]), 3.0, 2.0) == -1.0
    assert pucci_pq(np.zeros((2, 2)), 3.0, 2.0) == 0.0
    assert pucci_pq(np.array([[2.0]]), 1.5, 3.0) == 1.0
    with pytest.raises(ValueError, match="symmetric"):
        pucci_pq(np.array([[1.0, 1.0], [0.0, 1.0]]), 3.0, 2.0)
    with pytest.raises(ValueError):
        pucci_pq(np.ones((2, 3)), 3.0, 2.0)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(-10, 10), b=st.floats(-10, 10), c=st.floats(-10, 10))
def test_pucci_with_p_equal_two_is_trace(a, b, c):
    M = np.array([[a, b], [b, c]])
    assert pucci_pq(M, 2.0, 2.0) == pytest.approx(a + c, abs=1e-12 * (1 + abs(a) + abs(b) + abs(c)))


@pytest.mark.parametrize("p,q", [(3.0, 2.0), (1.5, 2.5), (1.2, 4.0)])
def test_pucci_is_infimum_over_samples(p, q):
    rng = np.random.default_rng(17)
    for _ in range(5):
        S = rng.standard_normal((2, 2))
        M = S + S.T
        A = sample_admissible(2, p, q, 10_000, rng)
        traces = np.einsum("kij,ji->k", A, M)
        P = pucci_pq(M, p, q)
        assert np.all(traces >= P - 1e-12)
        # the sampler concentrates near the extremes, so the infimum is nearly attained
        assert traces.min() - P <= 0.05 * (1 + abs(P))


def test_sample_admissible_eigenvalue_ranges():
    rng = np.random.default_rng(3)
    A = sample_admissible(2, 3.0, 1.5, 2000, rng)
    assert np.allclose(A, np.swapaxes(A, 1, 2))
    lam = np.linalg.eigvalsh(A)
    assert lam.min() >= 0.5 - 1e-12 and lam.max() <= 2.0 + 1e-12


# ---------------------------------------------------------------------------
# radius family

def test_fam1_t_zero_is_identically_one():
    fam, rep = fam1_radius(0.0, 0.25, 0.005, 4)
    assert np.all(fam.values == 1.0)
    assert rep.total_violations == 0


def test_fam1_reference_case():
    fam, rep = fam1_radius(1.0, 0.25, 0.005, 4, p=3.0, q=2.0, samples=129)
    assert rep.total_violations == 0, rep.violations
    assert rep.checked_points > 10_000
    vals = fam.values[fam.mask]
    assert vals.min() >= 1.0 and vals.max() <= 1.0 + 0.25
    X, Y = np.meshgrid(*fam.grid.axes, indexing="ij")
    outer = fam.mask & (np.hypot(X, Y) >= 0.5)
    assert np.all(fam.values[outer] == 1.0)
    inner = fam.mask & (np.hypot(X, Y) < 1 / 16)
    assert np.all(fam.values[inner] >= 1.0 + rep.h * 0.25 * (1 - 1e-6))
    assert set(rep.to_dict()) >= {"violations", "total_violations", "worst_margin", "h"}


@pytest.mark.parametrize("kw", [dict(gamma=0.7), dict(t=1.5), dict(rho=0.02), dict(N=1)])
def test_fam1_preconditions(kw):
    args = dict(t=1.0, gamma=0.25, rho=0.005, N=4)
    args.update(kw)
    with pytest.raises(ValueError):
        fam1_radius(**args)


@pytest.mark.parametrize("p,q", [(1.5, 2.5), (4.0, 2.0)])
def test_fam1_other_exponents(p, q):
    N = int(np.ceil(max(p, q, 1 / (p - 1), 1 / (q - 1))))
    _, rep = fam1_radius(1.0, 0.25, 0.005, N, p=p, q=q, samples=65)
    assert rep.total_violations == 0, rep.violations

