"""Compiled kernels vs the pure-Python fallback.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat 5] [--count 2000]

Prints one row per (kernel, d) with the best-of-repeat time for each backend
and the speedup.
"""

import argparse
import sys
import timeit

import numpy as np

from lamforge import _fallback

try:
    from lamforge import _kernels
except ImportError:
    _kernels = None


def bench(fn, mats, repeat):
    def run():
        for m in mats:
            fn(m)

    return min(timeit.repeat(run, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--count", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if _kernels is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<12}{'d':>3}{'cython [ms]':>14}{'python [ms]':>14}{'speedup':>10}")
    for d in (2, 3, 4, 6):
        mats = list(rng.uniform(-2, 2, size=(args.count, d, d)))
        stack = np.array(mats)
        rows = [
            ("det_lu", bench(_kernels.det_lu, mats, args.repeat), bench(_fallback.det_lu, mats, args.repeat)),
            ("signed_svd", bench(_kernels.signed_svd, mats, args.repeat), bench(_fallback.signed_svd, mats, args.repeat)),
            (
                "batch_det",
                min(timeit.repeat(lambda: _kernels.batch_det(stack), number=1, repeat=args.repeat)),
                min(timeit.repeat(lambda: _fallback.batch_det(stack), number=1, repeat=args.repeat)),
            ),
        ]
        for name, fast, slow in rows:
            print(f"{name:<12}{d:>3}{1e3 * fast:>14.2f}{1e3 * slow:>14.2f}{slow / fast:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
