"""Side-by-side timing of the numba kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats 200] [--rows 256]
Prints a table of per-call microseconds and the speedup factor. Numba
warm-up (compilation) happens before timing and is excluded.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from msgt.kernels import NUMBA_KERNELS, NUMPY_KERNELS


def _args_for(name: str, rows: int, rng):
    if name == "softmax_rows":
        return (rng.normal(size=(rows, rows)),)
    if name == "softmax_rows_bwd":
        x = rng.normal(size=(rows, rows))
        y = np.exp(x - x.max(axis=1, keepdims=True))
        y /= y.sum(axis=1, keepdims=True)
        return (y, rng.normal(size=(rows, rows)))
    if name == "gelu":
        return (rng.normal(size=(rows, rows)),)
    if name == "gelu_bwd":
        return (rng.normal(size=(rows, rows)), rng.normal(size=(rows, rows)))
    if name == "bucket_scatter_add":
        heads, buckets = 4, 32
        return (np.zeros((buckets, heads)),
                rng.integers(0, buckets, size=(rows, rows)).astype(np.int64),
                rng.normal(size=(heads, rows, rows)))
    if name == "adam_step":
        size = rows * rows
        return (rng.normal(size=size), rng.normal(size=size),
                np.zeros(size), np.zeros(size),
                1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)
    raise KeyError(name)


def _time_call(fn, args, repeats: int) -> float:
    fn(*args)  # warm-up: jit compile / cache touch
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats * 1e6


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--rows", type=int, default=256,
                        help="square problem side; adam uses rows^2 params")
    args = parser.parse_args()

    if NUMBA_KERNELS is None:
        print("numba backend unavailable (MSGT_NO_NUMBA set or numba "
              "missing); nothing to compare")
        return 1

    rng = np.random.default_rng(0)
    print(f"rows={args.rows} repeats={args.repeats}")
    print(f"{'kernel':<22}{'numpy us':>12}{'numba us':>12}{'speedup':>10}")
    for name in sorted(NUMPY_KERNELS):
        call_args = _args_for(name, args.rows, rng)
        t_np = _time_call(NUMPY_KERNELS[name], call_args, args.repeats)
        t_nb = _time_call(NUMBA_KERNELS[name], call_args, args.repeats)
        print(f"{name:<22}{t_np:>12.1f}{t_nb:>12.1f}{t_np / t_nb:>9.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
