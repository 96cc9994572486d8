"""Time the compiled signature kernel against the numpy fallback.

    python benchmarks/bench_kernels.py [--batch 256] [--points 1001] [--depth 3]
"""

import argparse
import timeit

import numpy as np

from eqtensor import _kernels


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--points", type=int, default=1001)
    ap.add_argument("--dim", type=int, default=3)
    ap.add_argument("--depth", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    inc = rng.standard_normal((args.batch, args.points - 1, args.dim)) / args.points
    backends = ["numpy"] + (["cython"] if _kernels.BACKEND == "cython" else [])
    print(f"batch={args.batch} points={args.points} d={args.dim} depth={args.depth}")
    times = {}
    for exact in (True, False):
        for b in backends:
            fn = lambda: _kernels.signature_levels(inc, args.depth, exact=exact, backend=b)
            t = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            times[(b, exact)] = t
            err = np.max(np.abs(fn() - _kernels.signature_levels(inc, args.depth, exact=exact, backend="numpy")))
            label = "exact" if exact else "discrete"
            print(f"{label:<9} {b:<7} {t * 1e3:9.2f} ms   max diff vs numpy {err:.1e}")
    if "cython" in backends:
        for exact in (True, False):
            label = "exact" if exact else "discrete"
            print(f"{label:<9} speedup {times[('numpy', exact)] / times[('cython', exact)]:.1f}x")
    else:
        print("compiled kernels not built; only the numpy route was timed")


if __name__ == "__main__":
    main()
