"""Compare the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Covers the two hot loops behind training/quantization and error rates:
nearest-centroid assignment and edit-distance alignment. Both backends
must return identical results; this script asserts that while timing.
"""

import argparse
import time

import numpy as np

from gibscore import _kernels_py

try:
    from gibscore import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def bench_assign(repeat):
    rng = np.random.default_rng(0)
    cases = [(2000, 50, 16), (20000, 100, 8), (5000, 500, 32)]
    for n, k, d in cases:
        frames = np.ascontiguousarray(rng.normal(size=(n, d)))
        centroids = np.ascontiguousarray(rng.normal(size=(k, d)))
        t_py, (labels_py, mind_py) = best_of(
            lambda: _kernels_py.assign_frames(frames, centroids), repeat
        )
        row = f"assign n={n:>6} k={k:>4} d={d:>3}  python {t_py * 1e3:8.1f} ms"
        if _kernels is not None:
            t_cy, (labels_cy, mind_cy) = best_of(
                lambda: _kernels.assign_frames(frames, centroids), repeat
            )
            assert np.array_equal(labels_py, labels_cy)
            assert np.allclose(mind_py, mind_cy, rtol=1e-12, atol=0)
            row += f"  cython {t_cy * 1e3:8.1f} ms  speedup {t_py / t_cy:6.1f}x"
        print(row)


def bench_edit_ops(repeat):
    rng = np.random.default_rng(1)
    cases = [(50, 200), (300, 300), (1000, 900)]
    for n, m in cases:
        ref = np.ascontiguousarray(rng.integers(0, 30, size=n), dtype=np.int64)
        hyp = np.ascontiguousarray(rng.integers(0, 30, size=m), dtype=np.int64)
        t_py, ops_py = best_of(lambda: _kernels_py.edit_ops(ref, hyp), repeat)
        row = f"edit   n={n:>6} m={m:>4}       python {t_py * 1e3:8.1f} ms"
        if _kernels is not None:
            t_cy, ops_cy = best_of(lambda: _kernels.edit_ops(ref, hyp), repeat)
            assert ops_py == ops_cy
            row += f"  cython {t_cy * 1e3:8.1f} ms  speedup {t_py / t_cy:6.1f}x"
        print(row)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3, help="best-of-N timing")
    args = parser.parse_args()
    if _kernels is None:
        print("compiled kernels not available; timing the fallback only")
    bench_assign(args.repeat)
    bench_edit_ops(args.repeat)


if __name__ == "__main__":
    main()
