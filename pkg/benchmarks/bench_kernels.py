"""Time the compiled kernels against the pure-Python reference.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-N time for each backend and the
speedup. Outputs are also compared so a broken build is obvious.
"""

import argparse
import timeit

import numpy as np

from randgcn import _kernels_py as py_kernels

try:
    from randgcn import _kernels as cy_kernels
except ImportError:  # extension not built
    cy_kernels = None


def cases(rng):
    z = np.linspace(0.0, 4.0, 801) + 4e-3j
    eigs = np.sort(rng.exponential(1.0, 2000))
    X = rng.standard_normal((3000, 256))
    rows = rng.integers(0, 3000, 60_000)
    cols = rng.integers(0, 3000, 60_000)
    return {
        "fixed_point_batch (801 z)": lambda k: k.fixed_point_batch(
            -z, 0.1875, 5.0, 0.5, 1e-12, 10_000),
        "gram_fixed_point (n=2000)": lambda k: k.gram_fixed_point(
            eigs, 1.0 + 0.5j, 1.0, 0.5, 1e-12, 10_000),
        "edge_dot (60k edges, p=256)": lambda k: k.edge_dot(X, rows, cols),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-14)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python [s]':>12s} {'cython [s]':>12s} {'speedup':>9s}")
    for name, call in cases(rng).items():
        t_py = min(timeit.repeat(lambda: call(py_kernels), number=1, repeat=args.repeat))
        if cy_kernels is None:
            print(f"{name:32s} {t_py:12.4f} {'n/a':>12s} {'n/a':>9s}")
            continue
        t_cy = min(timeit.repeat(lambda: call(cy_kernels), number=1, repeat=args.repeat))
        agree = "" if _same(call(py_kernels), call(cy_kernels)) else "  OUTPUT MISMATCH"
        print(f"{name:32s} {t_py:12.4f} {t_cy:12.4f} {t_py / t_cy:8.1f}x{agree}")


if __name__ == "__main__":
    main()
