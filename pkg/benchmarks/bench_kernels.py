"""Compiled vs pure-Python orthant kernels.

    python3 benchmarks/bench_kernels.py [--batch 2000] [--repeat 5]

Times ``correlator_batch`` on random 4x4 covariances (the MK4 workload) and
on 2x2 ones, checks the two backends agree, and prints a table.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from combbell import kernels


def random_covariances(rng, batch, n):
    A = rng.normal(size=(batch, n, n + 2))
    return A @ np.swapaxes(A, 1, 2) + 0.05 * np.eye(n)


def best_time(func, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        func()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=2000)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}; batch {args.batch}, best of {args.repeat}")
    print(f"{'N':>2} {'backend':>9} {'total ms':>10} {'us/cov':>8} {'speedup':>8}")
    for n in (2, 4):
        covs = random_covariances(rng, args.batch, n)
        results, times = {}, {}
        for name in backends:
            module = kernels.get_backend(name)
            results[name] = module.correlator_batch(covs)[0]
            times[name] = best_time(lambda: module.correlator_batch(covs), args.repeat)
        for name in backends:
            speedup = times["python"] / times[name]
            print(f"{n:>2} {name:>9} {1000 * times[name]:>10.2f} {1e6 * times[name] / args.batch:>8.2f} {speedup:>7.1f}x")
        if len(backends) == 2:
            diff = np.max(np.abs(results["compiled"] - results["python"]))
            print(f"{'':>2} max |compiled - python| = {diff:.1e}")


if __name__ == "__main__":
    main()
