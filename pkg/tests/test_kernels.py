import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dphase import kernels
from dphase.kernels import holder_quotient_kernel, numba_enabled, sup_convolution_kernel

needs_numba = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")


@needs_numba
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), dim=st.sampled_from([1, 2]))
def test_sup_convolution_paths_agree(seed, dim):
    rng = np.random.default_rng(seed)
    shape = (37,) if dim == 1 else (13, 9)
    h = (0.1,) if dim == 1 else (0.1, 0.2)
    vals = rng.standard_normal(shape)
    rad = rng.uniform(0.01, 0.5, shape)
    a = sup_convolution_kernel(vals, h, rad, use_numba=True)
    b = sup_convolution_kernel(vals, h, rad, use_numba=False)
    assert np.array_equal(a, b)


@needs_numba
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), dim=st.sampled_from([1, 2]))
def test_holder_paths_agree(seed, dim):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, (60, dim))
    vals = rng.standard_normal(60)
    al = np.array([0.1, 0.5, 1.0])
    a = holder_quotient_kernel(pts, vals, al, use_numba=True)
    b = holder_quotient_kernel(pts, vals, al, use_numba=False)
    assert np.allclose(a, b, rtol=1e-13, atol=0)


def test_holder_small_examples():
    pts = np.array([[0.0], [0.25], [1.0]])
    vals = np.array([0.0, 0.5, 1.0])
    out = holder_quotient_kernel(pts, vals, [1.0, 0.5])
    assert out[0] == pytest.approx(2.0)
    assert out[1] == pytest.approx(1.0)
    assert holder_quotient_kernel(pts, vals, []).size == 0
    assert holder_quotient_kernel(pts[:1], vals[:1], [1.0]).tolist() == [0.0]
    assert holder_quotient_kernel(pts, np.ones(3), [1.0]).tolist() == [0.0]


def test_env_flag_selects_numpy_path():
    code = "from dphase.kernels import numba_enabled; print(numba_enabled())"
    env = dict(os.environ, DPL_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "False"
    env["DPL_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == str(kernels.HAVE_NUMBA)


def test_flag_read_at_call_time(monkeypatch):
    monkeypatch.setenv("DPL_NUMBA", "off")
    assert not numba_enabled()
    monkeypatch.delenv("DPL_NUMBA")
    assert numba_enabled() == kernels.HAVE_NUMBA
