"""Compare the compiled and pure-Python Metropolis-Hastings kernels.

Usage: python3 benchmarks/bench_kernel.py [--n 60] [--steps 200000]

Both backends produce bit-identical chains for the same seed; this script
checks that on a short run and reports steps per second for each.
"""

import argparse
import time
import warnings

import numpy as np

from erpm.exact import ModelSpec
from erpm.kernel import BACKEND
from erpm.partition import Partition, SizeBounds
from erpm.sampler import MHChain, ProposalMixture
from erpm.statistics import CovariateStore, StatisticSpec

SPECS = [
    StatisticSpec("num_groups"),
    StatisticSpec("sum_squared_sizes"),
    StatisticSpec("group_homophily", attribute="age", form="range"),
    StatisticSpec("group_homophily", attribute="language", form="distinct_count"),
    StatisticSpec("dyadic_homophily", attribute="language", similarity="match"),
    StatisticSpec("dyadic_covariate", covariate="ties"),
]


def build(n, seed=0):
    rng = np.random.default_rng(seed)
    ties = np.triu(rng.random((n, n)) < 0.05, 1)
    cov = CovariateStore(
        n,
        attributes={"age": list(rng.integers(18, 40, n).astype(float)),
                    "language": list(rng.choice(["a", "b", "c"], n))},
        dyadic={"ties": (ties | ties.T).astype(float)},
    )
    m = ModelSpec(SPECS, [0.5, 0.05, -0.1, -0.4, 0.3, 1.0], SizeBounds(2, 5))
    start = Partition(tuple(i // 4 for i in range(n)))
    return m, cov, start


def time_backend(backend, m, cov, start, steps):
    chain = MHChain(m, cov, start, ProposalMixture(1, 1, 1), seed=1, backend=backend)
    chain.step(min(steps, 1000))
    t0 = time.perf_counter()
    chain.step(steps)
    return steps / (time.perf_counter() - t0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=60)
    ap.add_argument("--steps", type=int, default=200_000)
    args = ap.parse_args()
    warnings.simplefilter("ignore", UserWarning)
    m, cov, start = build(args.n)
    print(f"default backend: {BACKEND}")
    a = MHChain(m, cov, start, ProposalMixture(1, 1, 1), seed=3, backend="python").sample(200, 5)
    rates = {"python": time_backend("python", m, cov, start, max(args.steps // 50, 2000))}
    if BACKEND == "cython":
        b = MHChain(m, cov, start, ProposalMixture(1, 1, 1), seed=3, backend="cython").sample(200, 5)
        same = np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        print(f"identical chains for the same seed: {same}")
        rates["cython"] = time_backend("cython", m, cov, start, args.steps)
    for name, r in rates.items():
        print(f"{name:>7}: {r:12,.0f} steps/s")
    if "cython" in rates:
        print(f"speed-up: {rates['cython'] / rates['python']:.0f}x")


if __name__ == "__main__":
    main()
