"""Time the numba and numpy paths of the loop-bound kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

The first numba call includes compilation (or a cache load); it is reported
separately and excluded from the timed repeats.
"""
import argparse
import json
import time

import numpy as np

from dphase.kernels import HAVE_NUMBA, holder_quotient_kernel, sup_convolution_kernel


def _time(fn, repeat):
    out = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t)
    return min(out), float(np.median(out))


def cases(rng):
    for n in (65, 129):
        vals = rng.standard_normal((n, n))
        h = (2.0 / (n - 1),) * 2
        radii = rng.uniform(0.0, 4 * h[0], (n, n))
        yield f"supconv {n}x{n}", lambda u, v=vals, r=radii, hh=h: \
            sup_convolution_kernel(v, hh, r, use_numba=u)
    for m in (500, 2000):
        pts = rng.uniform(-1, 1, (m, 2))
        vals = np.abs(pts[:, 1]) ** 0.7
        yield f"holder m={m}", lambda u, p=pts, v=vals: \
            holder_quotient_kernel(p, v, [0.25, 0.5, 0.75, 1.0], use_numba=u)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the rows here")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'case':<18}{'first jit':>11}{'numba':>11}{'numpy':>11}{'speedup':>9}")
    for name, fn in cases(rng):
        t = time.perf_counter()
        a = fn(True)
        first = time.perf_counter() - t
        b = fn(False)
        if not np.allclose(a, b, rtol=1e-12, atol=0.0):
            raise SystemExit(f"{name}: paths disagree")
        tn, _ = _time(lambda: fn(True), args.repeat)
        tp, _ = _time(lambda: fn(False), args.repeat)
        rows.append({"case": name, "first_call": first, "numba": tn, "numpy": tp,
                     "speedup": tp / tn})
        print(f"{name:<18}{first:>10.3f}s{tn:>10.4f}s{tp:>10.4f}s{tp / tn:>8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
