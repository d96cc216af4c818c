"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeats 5] [--sizes 20 40 80]

Prints one row per (kernel, size) with the best-of-N wall time of each
backend, the speed-up, and the max abs difference between their outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from igt import _pykernels
from igt.featurize import normalized_laplacian

try:
    from igt._ext import kernels as _ext
except ImportError:  # extension not built
    _ext = None


def best_of(fn, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def laplacian_case(n, rng):
    # sparse random graph with a spanning chain, like a molecule
    edges = [(k, k + 1) for k in range(n - 1)]
    edges += [tuple(sorted(rng.choice(n, 2, replace=False))) for _ in range(n // 4)]
    e = np.array(sorted(set(edges)))
    both = np.vstack([e, e[:, ::-1]])
    return normalized_laplacian(n, both)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[20, 40, 80])
    args = ap.parse_args(argv)
    if _ext is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'n':>6}{'cython s':>12}{'python s':>12}{'speed-up':>10}{'max diff':>11}")
    for n in args.sizes:
        L = laplacian_case(n, rng)
        tc, (wc, _, _) = best_of(lambda: _ext.jacobi_eigh(L), args.repeats)
        tp, (wp, _, _) = best_of(lambda: _pykernels.jacobi_eigh(L), args.repeats)
        diff = float(np.max(np.abs(np.sort(wc) - np.sort(wp))))
        print(f"{'jacobi_eigh':<14}{n:>6}{tc:>12.5f}{tp:>12.5f}{tp / tc:>10.1f}{diff:>11.1e}")
    for n in args.sizes:
        a = rng.uniform(0, 3.0 * n ** (1 / 3), size=(n, 3))
        b = rng.uniform(0, 3.0 * (10 * n) ** (1 / 3), size=(10 * n, 3))
        tc, pc = best_of(lambda: _ext.pairs_within(a, b, 5.0), args.repeats)
        tp, pp = best_of(lambda: _pykernels.pairs_within(a, b, 5.0), args.repeats)
        same = 0.0 if np.array_equal(pc, pp) else float("nan")
        print(f"{'pairs_within':<14}{n:>6}{tc:>12.5f}{tp:>12.5f}{tp / tc:>10.1f}{same:>11.1e}")


if __name__ == "__main__":
    main()
