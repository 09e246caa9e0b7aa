"""Benchmark the compiled distance-transform kernel against the numpy fallback.

Run from the repo root after `python setup.py build_ext --inplace` (or an
editable install):

    python benchmarks/bench_l1dist.py
"""

import time

import numpy as np

from sppnet import _l1dist_py

try:
    from sppnet import _l1dist as compiled
except ImportError:
    compiled = None

SIZES = (64, 128, 256, 512, 1024)
REPEATS = 5


def random_region(size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    inside = np.zeros((size, size), dtype=np.uint8)
    for _ in range(max(3, size // 32)):
        cy, cx = rng.integers(0, size, 2)
        r = rng.integers(size // 16 + 1, size // 4 + 2)
        inside |= ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r).astype(np.uint8)
    return inside


def time_fn(fn, arg) -> float:
    best = float("inf")
    for _ in range(REPEATS):
        t0 = time.perf_counter()
        fn(arg)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    rng = np.random.default_rng(0)
    if compiled is None:
        print("compiled kernel not built; showing numpy fallback only")
    print(f"{'size':>6} {'numpy (ms)':>12} {'compiled (ms)':>14} {'speedup':>9}  equal")
    for size in SIZES:
        inside = np.ascontiguousarray(random_region(size, rng))
        t_py = time_fn(_l1dist_py.l1_distance_inside, inside)
        if compiled is None:
            print(f"{size:>6} {1e3 * t_py:>12.3f} {'-':>14} {'-':>9}  -")
            continue
        t_c = time_fn(compiled.l1_distance_inside, inside)
        same = np.array_equal(
            _l1dist_py.l1_distance_inside(inside), compiled.l1_distance_inside(inside)
        )
        print(f"{size:>6} {1e3 * t_py:>12.3f} {1e3 * t_c:>14.3f} "
              f"{t_py / t_c:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
