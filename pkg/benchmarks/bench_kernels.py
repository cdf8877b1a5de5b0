"""Compare the compiled and NumPy kernel backends on GCP-sized workloads.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from gbsgcp._kernels import backends


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads(rng):
    # (label, callable factory taking a backend module)
    n1 = rng.normal(60, 10, 50_000) + 1j * rng.normal(0, 3, 50_000)
    n2 = rng.normal(20, 5, (20_000, 2)) + 1j * rng.normal(0, 2, (20_000, 2))
    n3 = rng.normal(8, 3, (5_000, 3)) + 1j * rng.normal(0, 1, (5_000, 3))
    x = rng.exponential(0.3, (100_000, 50))
    u = rng.random(x.shape)
    return [
        ("weights d=1, 50k x 121 bins", lambda k: k.grouped_weights(n1, 0, 120)),
        ("gcp_sums d=1, 50k x 121 bins", lambda k: k.gcp_sums(n1[:, None], np.array([0]), np.array([120]), 100, 500)),
        ("gcp_sums d=2, 20k x 41^2 bins",
         lambda k: k.gcp_sums(n2, np.array([0, 0]), np.array([40, 40]), 40, 500)),
        ("gcp_sums d=3, 5k x 21^3 bins",
         lambda k: k.gcp_sums(n3, np.zeros(3, np.int64), np.full(3, 20), 10, 500)),
        ("poisson_counts 5e6 draws, c_max=13", lambda k: k.poisson_counts(x, u, 13, True)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    found = backends()
    names = sorted(found)
    print(f"backends: {', '.join(names)}")
    rows = []
    for label, fn in workloads(np.random.default_rng(0)):
        times = {name: _time(lambda: fn(found[name]), args.repeat) for name in names}
        rows.append((label, times))
    head = f"{'workload':38s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else "")
    print(head)
    for label, times in rows:
        line = f"{label:38s}" + "".join(f"{times[n]:11.3f}s" for n in names)
        if "cython" in times:
            line += f"{times['python'] / times['cython']:11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
