import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dphase import (Ball, Exponents, GridFunction, energy, first_variation, local_min_check,
                    make_grid, negate_swap, oracle_1d, rescale, split)
from dphase.energy import negative_phase_divisor

from helpers import solve_1d, grid_1d

E32 = Exponents(3.0, 2.0)


def test_exponents_validation():
    with pytest.raises(ValueError, match="p != q"):
        Exponents(2.0, 2.0)
    for bad in ((1.0, 2.0), (2.0, np.inf), (0.5, 3.0)):
        with pytest.raises(ValueError):
            Exponents(*bad)
    assert E32.swapped() == Exponents(2.0, 3.0)


def test_split_examples():
    g = make_grid(1, [2 + 1], [[0, 1]])
    z = split(GridFunction.zeros(g))
    assert not z.uplus.values.any() and not z.uminus.values.any()
    g2 = make_grid(1, [21], [[-1, 1]])
    x = g2.axes[0]
    pp = split(GridFunction(g2, x))
    assert np.array_equal(pp.uplus.values, np.maximum(x, 0))
    assert np.array_equal(pp.uminus.values, np.maximum(-x, 0))
    g3 = make_grid(1, [3], [[0, 1]])
    pp = split(GridFunction(g3, [-2.0, 3.0, 0.0]))
    assert pp.uplus.values.tolist() == [0.0, 3.0, 0.0]
    assert pp.uminus.values.tolist() == [2.0, 0.0, 0.0]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=40))
def test_split_round_trip(vals):
    g = make_grid(1, [len(vals)], [[0, 1]])
    pp = split(GridFunction(g, vals))
    assert np.array_equal(pp.uplus.values - pp.uminus.values, np.asarray(vals, float))
    assert np.all(pp.uplus.values * pp.uminus.values == 0)


def test_energy_zero():
    g = make_grid(2, [9, 9], [[0, 1], [0, 1]])
    assert energy(GridFunction.zeros(g), None, E32).total == 0.0


def test_energy_constant_gradient_cases():
    g = make_grid(1, [11], [[0, 1]])
    e = energy(GridFunction(g, g.axes[0]), None, E32)
    assert e.total == pytest.approx(1.0, abs=1e-14)
    assert e.negative_part == 0.0
    g = make_grid(1, [21], [[-1, 1]])
    e = energy(GridFunction(g, g.axes[0]), None, E32)
    assert e.positive_part == pytest.approx(1.0, abs=1e-14)
    assert e.negative_part == pytest.approx(1.0, abs=1e-14)
    assert e.total == pytest.approx(2.0, abs=1e-14)


def test_energy_rejects_negative_smoothing():
    g = make_grid(1, [5], [[0, 1]])
    with pytest.raises(ValueError):
        energy(GridFunction.zeros(g), None, E32, smoothing=-1e-3)


def test_energy_on_ball_region():
    g = make_grid(1, [101], [[-1, 1]])
    e = energy(GridFunction(g, g.axes[0]), Ball([0.5], 0.25), E32)
    # cells whose centers lie in the open ball: 0.27, 0.29, ..., 0.73
    assert e.total == pytest.approx(24 * 0.02, abs=1e-12)


def test_energy_breakdown_json_keys():
    g = make_grid(1, [5], [[0, 1]])
    d = energy(GridFunction(g, g.axes[0]), None, E32, smoothing=0.1).to_dict()
    assert set(d) == {"total", "positive_part", "negative_part", "p", "q", "smoothing"}


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_energy_parts_depend_on_own_phase(seed):
    rng = np.random.default_rng(seed)
    g = make_grid(2, [7, 6], [[0, 1], [0, 1]])
    u = rng.standard_normal(g.shape)
    other = np.where(u > 0, u, -rng.random(g.shape))  # same u+, different u-
    a = energy(GridFunction(g, u), None, E32)
    b = energy(GridFunction(g, other), None, E32)
    assert a.positive_part == b.positive_part
    assert a.total == pytest.approx(a.positive_part + a.negative_part, rel=1e-15)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), c=st.floats(0.0, 5.0))
def test_energy_shift_invariance_in_single_phase(seed, c):
    rng = np.random.default_rng(seed)
    g = make_grid(2, [8, 8], [[0, 1], [0, 1]])
    u = rng.random(g.shape) + 0.1
    a = energy(GridFunction(g, u), None, E32).total
    b = energy(GridFunction(g, u + c), None, E32).total
    assert b == pytest.approx(a, rel=1e-9)


def _fd_gradient(u, exps, eps, step=1e-6):
    out = np.zeros(u.grid.size)
    base = u.flat
    for k in range(base.size):
        up, dn = base.copy(), base.copy()
        up[k] += step
        dn[k] -= step
        ep = energy(u.with_values(up.reshape(u.grid.shape)), None, exps, eps).total
        em = energy(u.with_values(dn.reshape(u.grid.shape)), None, exps, eps).total
        out[k] = (ep - em) / (2 * step)
    return out


def test_first_variation_examples():
    g = make_grid(1, [17], [[0, 1]])
    assert not first_variation(GridFunction.zeros(g), E32, 1e-2).values.any()
    aff = GridFunction(g, 1.0 + 2.0 * g.axes[0])
    fv = first_variation(aff, Exponents(2.0, 3.0), 1e-6).values
    assert np.abs(fv[1:-1]).max() < 1e-12
    with pytest.raises(ValueError):
        first_variation(aff, E32, 0.0)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), p=st.floats(1.2, 4.0), q=st.floats(1.2, 4.0),
       eps=st.floats(1e-3, 1.0), dim=st.sampled_from([1, 2]))
def test_first_variation_matches_finite_differences(seed, p, q, eps, dim):
    if abs(p - q) < 1e-3:
        q = p + 0.5
    exps = Exponents(p, q)
    rng = np.random.default_rng(seed)
    g = make_grid(1, [17], [[0, 1]]) if dim == 1 else make_grid(2, [5, 4], [[0, 1], [0, 1]])
    u = GridFunction(g, rng.standard_normal(g.shape))
    fv = first_variation(u, exps, eps).flat
    fd = _fd_gradient(u, exps, eps)
    scale = np.abs(fd).max()
    assert np.allclose(fv, fd, rtol=1e-6, atol=1e-6 * scale)


def test_negate_swap_examples():
    g = make_grid(1, [21], [[-1, 1]])
    u = GridFunction(g, g.axes[0])
    w, sw = negate_swap(u, E32)
    assert sw == Exponents(2.0, 3.0)
    assert energy(w, None, sw).total == energy(u, None, E32).total
    z, _ = negate_swap(GridFunction.zeros(g), E32)
    assert not z.values.any()


def test_negate_swap_identity_many_inputs():
    rng = np.random.default_rng(11)
    g = make_grid(1, [33], [[-1, 1]])
    g2 = make_grid(2, [6, 5], [[-1, 1], [0, 1]])
    for k in range(1000):
        gg = g if k % 2 else g2
        p, q = rng.uniform(1.1, 5.0, 2)
        exps = Exponents(p, q)
        u = GridFunction(gg, rng.standard_normal(gg.shape) * rng.uniform(0.1, 10))
        region = None if k % 3 else Ball([rng.uniform(a, b) for a, b in gg.extents],
                                         rng.uniform(0.3, 1.5))
        w, sw = negate_swap(u, exps)
        a = energy(u, region, exps)
        b = energy(w, region, sw)
        assert a.total == b.total


def test_local_min_check_zero_and_noise():
    g = make_grid(2, [17, 17], [[-1, 1], [-1, 1]])
    rep = local_min_check(GridFunction.zeros(g), E32, trials=16)
    assert rep.passed and rep.max_energy_drop <= 0
    noise = GridFunction(g, np.random.default_rng(0).standard_normal(g.shape))
    assert not local_min_check(noise, E32, trials=16, amplitude=0.1).passed


def test_local_min_check_on_discrete_minimizer():
    u, _, _ = solve_1d(1.0, 1.0, 3.0, 2.0, 2001)
    assert local_min_check(u, E32).passed


def test_oracle_interpolant_is_not_a_discrete_minimizer():
    # the nodal interpolant of the exact profile keeps the kink inside one cell;
    # the discrete minimizer instead gives that cell the slope alpha + beta
    o = oracle_1d(1.0, 1.0, E32)
    rep = local_min_check(o.sample(grid_1d(2001)), E32)
    assert not rep.passed
    u, _, _ = solve_1d(1.0, 1.0, 3.0, 2.0, 2001)
    assert energy(u, None, E32).total < energy(o.sample(grid_1d(2001)), None, E32).total


def test_local_min_check_validation():
    g = make_grid(1, [9], [[0, 1]])
    with pytest.raises(ValueError):
        local_min_check(GridFunction.zeros(g), E32, trials=0)
    with pytest.raises(ValueError):
        local_min_check(GridFunction.zeros(g), E32, amplitude=-1.0)


def test_rescale_divisor():
    assert negative_phase_divisor(0.5, 2.0, E32) == 4.0


def test_rescale_identity():
    g = make_grid(2, [17, 17], [[-1, 1], [-1, 1]])
    u = GridFunction(g, np.random.default_rng(2).standard_normal(g.shape))
    w = rescale(u, Ball([0.0, 0.0], 1.0), 1.0, E32)
    assert w.grid == g
    assert np.allclose(w.values, u.values, atol=1e-14)


@pytest.mark.parametrize("S,rho", [(2.0, 0.5), (0.3, 0.25), (1.7, 0.75)])
def test_rescale_two_plane(S, rho):
    alpha, beta = 1.3, 0.7
    g = make_grid(1, [401], [[-1, 1]])
    u = GridFunction(g, np.where(g.axes[0] > 0, alpha * g.axes[0], beta * g.axes[0]))
    w = rescale(u, Ball([0.0], rho), S, E32)
    x = w.grid.axes[0]
    a2 = rho * alpha / S
    b2 = rho * beta / (rho ** (1 - 1.5) * S ** 1.5)
    assert np.allclose(w.values, np.where(x > 0, a2 * x, b2 * x), atol=1e-13)


def test_rescale_errors():
    g = make_grid(1, [11], [[-1, 1]])
    u = GridFunction(g, g.axes[0])
    with pytest.raises(ValueError):
        rescale(u, Ball([0.0], 0.5), 0.0, E32)
    with pytest.raises(ValueError):
        rescale(u, Ball([0.8], 0.5), 1.0, E32)


def test_rescaled_minimizer_passes_local_min_check():
    u, _, _ = solve_1d(1.0, 1.0, 3.0, 2.0, 2001)
    h = u.grid.hmin
    w = rescale(u, Ball([-0.14], 300 * h), 0.5, E32)
    assert local_min_check(w, E32).passed
