"""Throughput comparison of the numba and pure-numpy backend kernels.

Times each hot kernel under the active backend (numba unless MSIP_NUMBA=0)
against the pure-numpy reference path, plus one end-to-end particle run.

    python benchmarks/bench_backends.py [--sizes 200,1000] [--repeats 5]
"""

import argparse
import statistics
import time

import numpy as np

from msip._backend import (
    USE_NUMBA,
    cross_sq_dists,
    imq_stein_gram,
    reference_backend,
    se_cross_rowsums,
    se_self_rowsums,
    sym_sq_dists,
    warmup,
)
from msip.dynamics import MsipParams, run_msip
from msip.kernel import KernelSpec
from msip.targets import make_benchmark


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def kernel_cases(n, d, rng):
    Y = np.ascontiguousarray(rng.standard_normal((n, d)))
    X = np.ascontiguousarray(rng.standard_normal((4 * n, d)))
    w = rng.standard_normal(n)
    S = np.ascontiguousarray(rng.standard_normal((n, d)))
    return {
        f"sym_sq_dists        n={n}": lambda: sym_sq_dists(Y),
        f"cross_sq_dists      n={n}": lambda: cross_sq_dists(X, Y),
        f"se_cross_rowsums    n={n}": lambda: se_cross_rowsums(
            X, Y, w, 0.5
        ),
        f"se_self_rowsums     n={n}": lambda: se_self_rowsums(X, 0.5),
        f"imq_stein_gram      n={n}": lambda: imq_stein_gram(
            Y, S, 1.0, 0.25, -0.5
        ),
    }


def particle_run():
    target = make_benchmark("gmm", 2, seed=0)
    params = MsipParams(
        kernel=KernelSpec(sigma=0.5, lam=1e-6),
        eta=0.5,
        T=200,
        estimator="stein",
        Q=10,
        seed=0,
    )
    Y0 = np.random.default_rng(0).normal(3.75, 2.0, size=(25, 2))
    return lambda: run_msip(target, params, Y0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="200,1000",
                    help="comma-separated particle counts")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--dim", type=int, default=2)
    args = ap.parse_args()

    if not USE_NUMBA:
        print("MSIP_NUMBA=0: the active backend IS the numpy reference; "
              "expect ratios of 1.")
    warmup()
    rng = np.random.default_rng(7)

    cases = {}
    for n in [int(s) for s in args.sizes.split(",") if s]:
        cases.update(kernel_cases(n, args.dim, rng))
    cases["run_msip stein M=25 T=200"] = particle_run()

    width = max(len(name) for name in cases)
    print(f"{'case':<{width}}  {'active':>10}  {'numpy':>10}  {'ratio':>6}")
    for name, fn in cases.items():
        fn()  # untimed warm call (JIT, allocator)
        active = best_of(fn, args.repeats)
        with reference_backend():
            fn()
            reference = best_of(fn, args.repeats)
        ratio = reference / active if active > 0 else float("inf")
        print(f"{name:<{width}}  {active * 1e3:>8.2f}ms  "
              f"{reference * 1e3:>8.2f}ms  {ratio:>5.1f}x")


if __name__ == "__main__":
    main()
