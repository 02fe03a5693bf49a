"""Compare the compiled kernels with the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Prints one line
per kernel and problem size with the best wall time of each backend, the
speedup and the largest absolute difference between the two results.
"""
import argparse
import time

import numpy as np

from koopflow import _pykernels

try:
    from koopflow import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_time(fn, args, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(rng):
    for n in (64, 288, 576):
        D = np.ascontiguousarray(rng.random((n, n)))
        yield "dtw_accumulate", f"{n}x{n}", (D,)
    for t, h, m in ((30, 300, 565), (5, 288, 577), (1, 50, 2000)):
        H = np.ascontiguousarray(rng.standard_normal((h * t, m)))
        yield "antidiagonal_mean", f"t={t} h={h} m={m}", (H, t, h)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    if _ckernels is None:
        print("compiled extension not available; timing the fallback only")
    print(f"{'kernel':<18} {'size':<20} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8} {'max |diff|':>11}")
    for name, size, fargs in cases(rng):
        tp, ref = best_time(getattr(_pykernels, name), fargs, args.repeat)
        if _ckernels is None:
            print(f"{name:<18} {size:<20} {tp:11.4f} {'-':>11} {'-':>8} {'-':>11}")
            continue
        tc, out = best_time(getattr(_ckernels, name), fargs, args.repeat)
        diff = float(np.max(np.abs(np.asarray(out) - ref)))
        print(f"{name:<18} {size:<20} {tp:11.4f} {tc:11.4f} {tp / tc:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
