"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py [--repeat R]
"""
import argparse
import timeit

import numpy as np

from probesched import kernels
from probesched.instance import gen_clos, gen_random


def cases():
    clos = gen_clos(3, 4)
    rng = np.random.default_rng(0)
    cycle = rng.integers(0, clos.m, size=20_000).astype(np.int64)
    w = np.ascontiguousarray(clos.weights)
    rnd = gen_random(400, 200, 0.05, seed=0)
    x = rng.integers(1, 50, size=rnd.n).astype(np.int64)
    pi = rng.choice([0.0, 0.5, 0.9], size=20_000)
    return {
        "deterministic_profile (n=%d, N=20000)" % clos.n: lambda mod: mod.deterministic_profile(
            cycle, clos.test_indptr, clos.test_indices, w
        ),
        "kt_best x1000 (n=400, m=200)": lambda mod: [
            mod.kt_best(rnd.test_indptr, rnd.test_indices, rnd.weights, x) for _ in range(1000)
        ],
        "probabilistic_row (N=20000)": lambda mod: mod.probabilistic_row(pi),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    found = kernels.backends()
    print(f"selected backend: {kernels.BACKEND}")
    names = sorted(found)
    print(f"{'kernel':<42}" + "".join(f"{n + ' (ms)':>16}" for n in names) + f"{'speedup':>10}")
    for label, fn in cases().items():
        best = {}
        for name in names:
            mod = found[name]
            best[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)) * 1e3
        speed = best["python"] / best["cython"] if "cython" in best else float("nan")
        print(f"{label:<42}" + "".join(f"{best[n]:>16.2f}" for n in names) + f"{speed:>10.1f}")


if __name__ == "__main__":
    main()
