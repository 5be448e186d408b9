#!/usr/bin/env python3
"""Time the numba and pure-numpy kernel backends on the same problems.

    python3 benchmarks/bench_kernels.py [--repeat 3]

The numpy backend is what runs when SBVAR_DISABLE_NUMBA=1 is set.
"""

import argparse
import statistics
import time

import numpy as np

from sbvar import _kernels
from sbvar.model import TimeSeries, builtin_scenario, simulate
from sbvar.pipeline import global_scale
from sbvar.solver import lasso_gram, stage1_fit


def scaled(series):
    return TimeSeries(series.values / global_scale(series.values) * 0.4)


def cases():
    s1 = scaled(simulate(builtin_scenario(1), 1))
    s3 = scaled(simulate(builtin_scenario(3), 1))
    rng = np.random.default_rng(0)
    X = rng.standard_normal((300, 100))
    Y = X[:, :5] @ rng.standard_normal((5, 20)) + rng.standard_normal((300, 20))
    G, C = X.T @ X, X.T @ Y
    return {
        "stage1 scenario 1 (T=300, p=20)": lambda: stage1_fit(s1, 0.08),
        "stage1 scenario 3 (T=80, p=100)": lambda: stage1_fit(s3, 0.2),
        "lasso d=100, p=20": lambda: lasso_gram(G, C, 50.0, tol=1e-10),
    }


def bench(fn, repeat):
    fn()  # warm-up, includes jit compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if _kernels.numba is not None else [])
    print(f"{'case':<34}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for name, fn in cases().items():
        row = {}
        for b in backends:
            _kernels.set_backend(b)
            row[b] = bench(fn, args.repeat)
        speed = row["numpy"] / row["numba"] if "numba" in row else float("nan")
        print(f"{name:<34}" + "".join(f"{row[b]:>11.3f}s" for b in backends) + f"{speed:>11.1f}x")


if __name__ == "__main__":
    main()
