"""Time the compiled kernels against their numpy twins.

Usage: ``python benchmarks/bench_kernels.py [--n 10] [--count 500000] [--repeat 3]``.
Prints one line per kernel with the best-of-``repeat`` time of each
backend and the speedup.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mallowsmix import kernels
from mallowsmix.mallows import insertion_cdf


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def cases(n: int, count: int, rng: np.random.Generator):
    central = np.arange(n, dtype=np.int32)
    cdf = insertion_cdf(0.5, n)
    uniforms = rng.random((count, n))
    orders = np.ascontiguousarray(np.argsort(rng.random((count, n)), axis=1).astype(np.int32))
    weights = np.ones(count)
    pos = np.arange(n, dtype=np.int32)
    radix = (n ** np.arange(n - 1, -1, -1)).astype(np.int64)
    return {
        "insertion_sample": lambda k: k.insertion_sample(central, cdf, uniforms),
        "top_counts": lambda k: k.top_counts(orders, weights, n),
        "position_counts": lambda k: k.position_counts(orders, weights, n),
        "distances_to": lambda k: k.distances_to(orders, pos),
        "precedence": lambda k: k.precedence(orders, weights, n),
        "lehmer_keys": lambda k: k.lehmer_keys(orders, radix),
    }


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=10)
    parser.add_argument("--count", type=int, default=500_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled kernels not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)
    print(f"n={args.n} rows={args.count}")
    print(f"{'kernel':<18}" + "".join(f"{name:>12}" for name in impls) + f"{'speedup':>10}")
    for name, call in cases(args.n, args.count, rng).items():
        times = {b: _best(lambda: call(mod), args.repeat) for b, mod in impls.items()}
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<18}" + "".join(f"{t:>11.4f}s" for t in times.values()) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
