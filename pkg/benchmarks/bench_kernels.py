"""Compare the compiled and numpy kernel backends on a large renewal scenario set.

Usage: python benchmarks/bench_kernels.py [--scenarios N] [--repeat R]
"""
import argparse
import time

import numpy as np

from stoch_thresh import kernels
from stoch_thresh.closed_form import renewal_scenarios
from stoch_thresh.solver import solve_equality


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenarios", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    sset = renewal_scenarios(rng.exponential(5.0, args.scenarios), rng=rng)
    print(f"{len(sset)} scenarios, {sset.breakpoints.size} breakpoints")
    level = float(np.median(sset.keys))
    times = rng.random(len(sset)) * 5.0
    index = np.arange(len(sset))
    results = {}
    for name in kernels.available_backends():
        mod = kernels.get_backend(name)
        args_c = (sset.offsets, sset.breakpoints, sset.keys, sset.horizons, level, False)
        args_i = (sset.offsets, sset.breakpoints, sset.values, sset.cumint, index, times)
        results[name] = (mod.crossing_times(*args_c), mod.integrate_at(*args_i))
        t_cross = best_of(lambda: mod.crossing_times(*args_c), args.repeat)
        t_cum = best_of(lambda: mod.cumulative_integrals(sset.offsets, sset.breakpoints,
                                                         sset.values), args.repeat)
        t_int = best_of(lambda: mod.integrate_at(*args_i), args.repeat)
        print(f"{name:>7}: crossing {t_cross * 1e3:8.2f} ms  cumulative {t_cum * 1e3:8.2f} ms"
              f"  integrate {t_int * 1e3:8.2f} ms")
    if len(results) > 1:
        a, b = results.values()
        same = all(np.array_equal(x, y) for x, y in zip(a, b))
        print("backends bit-identical:", same)
    t_solve = best_of(lambda: solve_equality(sset, 0.5 * sset.total_budget), args.repeat)
    print(f"solve_equality ({kernels.BACKEND}, {kernels.worker_count()} workers): "
          f"{t_solve * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
