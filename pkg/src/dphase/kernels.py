"""Loop-bound kernels with a numba path and a pure numpy fallback.

The numba path is used when numba imports and the environment variable
``DPL_NUMBA`` is not set to ``0``.  Both paths are always importable under
explicit names so that tests and the benchmark can compare them.
"""
import os

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def numba_enabled():
    """True when the jitted kernels are selected."""
    flag = os.environ.get("DPL_NUMBA", "1").strip().lower()
    return HAVE_NUMBA and flag not in ("0", "false", "no", "off")


# ---------------------------------------------------------------------------
# sup-convolution: v(x) = max of u over nodes y with |y - x| <= phi(x)

@njit(cache=True)
def _supconv_numba(values, shape, lo, h, radii, out):
    n0 = shape[0]
    n1 = shape[1]
    for i in range(n0):
        for j in range(n1):
            r = radii[i, j]
            di = int(np.floor(r / h[0] + 1e-9))
            dj = int(np.floor(r / h[1] + 1e-9)) if n1 > 1 else 0
            i0 = max(i - di, 0)
            i1 = min(i + di, n0 - 1)
            j0 = max(j - dj, 0)
            j1 = min(j + dj, n1 - 1)
            best = values[i, j]
            r2 = r * r * (1.0 + 1e-12)
            for a in range(i0, i1 + 1):
                dx = (a - i) * h[0]
                for b in range(j0, j1 + 1):
                    dy = (b - j) * h[1]
                    if dx * dx + dy * dy <= r2:
                        v = values[a, b]
                        if v > best:
                            best = v
            out[i, j] = best
    return out


def _supconv_numpy(values, shape, lo, h, radii, out):
    n0, n1 = shape
    ii = np.arange(n0)[:, None]
    jj = np.arange(n1)[None, :]
    for i in range(n0):
        for j in range(n1):
            r = radii[i, j]
            di = int(np.floor(r / h[0] + 1e-9))
            dj = int(np.floor(r / h[1] + 1e-9)) if n1 > 1 else 0
            a = ii[max(i - di, 0):i + di + 1]
            b = jj[:, max(j - dj, 0):j + dj + 1]
            d2 = ((a - i) * h[0]) ** 2 + ((b - j) * h[1]) ** 2
            block = values[a, b]
            inside = d2 <= r * r * (1.0 + 1e-12)
            out[i, j] = max(values[i, j], block[inside].max())
    return out


def sup_convolution_kernel(values, h, radii, use_numba=None):
    """Ball maximum of a 1D or 2D nodal array with node-dependent radii.

    Parameters
    ----------
    values : ndarray
        Nodal values, shape ``(n0,)`` or ``(n0, n1)``.
    h : sequence of float
        Grid spacing per axis.
    radii : ndarray
        Radius per node, same shape as ``values``.
    use_numba : bool, optional
        Force a path; default follows :func:`numba_enabled`.
    """
    vals = np.ascontiguousarray(values, dtype=float)
    rad = np.ascontiguousarray(radii, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
        rad = rad[:, None]
        hh = np.array([h[0], 1.0])
    else:
        hh = np.asarray(h, dtype=float)
    shape = np.array(vals.shape, dtype=np.int64)
    out = np.empty_like(vals)
    if use_numba is None:
        use_numba = numba_enabled()
    fn = _supconv_numba if use_numba else _supconv_numpy
    fn(vals, shape, np.zeros(2), hh, rad, out)
    return out.reshape(np.shape(values))


# ---------------------------------------------------------------------------
# pairwise Hölder quotient: max |f(x)-f(y)| / |x-y|^alpha over all pairs

@njit(cache=True)
def _holder_numba(points, values, alphas, out):
    # maximize log|df| - alpha log|x - y| and exponentiate once at the end
    m = points.shape[0]
    d = points.shape[1]
    na = alphas.shape[0]
    best = np.full(na, -np.inf)
    for i in range(m):
        for j in range(i + 1, m):
            df = abs(values[i] - values[j])
            if df == 0.0:
                continue
            r2 = 0.0
            for c in range(d):
                t = points[i, c] - points[j, c]
                r2 += t * t
            ld = np.log(df)
            lr = 0.5 * np.log(r2)
            for k in range(na):
                v = ld - alphas[k] * lr
                if v > best[k]:
                    best[k] = v
    for k in range(na):
        out[k] = np.exp(best[k]) if best[k] > -np.inf else 0.0
    return out


def _holder_numpy(points, values, alphas, out, chunk=512):
    out[:] = 0.0
    m = points.shape[0]
    for s in range(0, m, chunk):
        p = points[s:s + chunk]
        diff = np.abs(values[s:s + chunk, None] - values[None, :])
        r2 = ((p[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        mask = diff > 0
        if not mask.any():
            continue
        lr = 0.5 * np.log(r2[mask])
        df = diff[mask]
        for k, a in enumerate(alphas):
            out[k] = max(out[k], float((df * np.exp(-a * lr)).max()))
    return out


def holder_quotient_kernel(points, values, alphas, use_numba=None):
    """Exact discrete Hölder seminorm of ``values`` over ``points``.

    Returns one value per exponent in ``alphas``.
    """
    pts = np.ascontiguousarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    vals = np.ascontiguousarray(values, dtype=float)
    al = np.ascontiguousarray(alphas, dtype=float)
    out = np.zeros(al.shape[0])
    if al.size == 0 or vals.size < 2:
        return out
    if use_numba is None:
        use_numba = numba_enabled()
    fn = _holder_numba if use_numba else _holder_numpy
    fn(pts, vals, al, out)
    return out
