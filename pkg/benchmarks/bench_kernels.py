"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is run on identical inputs under both backends; outputs are
checked for agreement before timing.
"""
import argparse
import json
import time

import numpy as np

from stkm._backend import available_backends
from stkm.phase2 import similarity_matrix, theta_grid


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    V = rng.normal(size=(200 * 100, 5))
    labels = rng.integers(0, 4, size=(50, 300))
    A = np.ascontiguousarray(similarity_matrix(labels).data)
    grid = theta_grid(0.01)
    order = rng.permutation(A.shape[0])
    rows = np.bincount(rng.integers(0, 8, size=600), minlength=8)
    cols = np.bincount(rng.integers(0, 6, size=600), minlength=6)
    return {
        "project_simplex_rows (20000x5)": lambda k: k.project_simplex_rows(V),
        "greedy_groups (N=300)": lambda k: k.greedy_groups(A, 0.5, order),
        "group_counts (N=300, 101 thetas)": lambda k: k.group_counts(A, grid, order),
        "expected_mutual_info (n=600, 8x6)": lambda k: k.expected_mutual_info(rows, cols, 600),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the fallback is available")
    results = []
    for name, call in cases(np.random.default_rng(0)).items():
        outs = {b: call(k) for b, k in backends.items()}
        if len(outs) == 2:
            a, b = outs["python"], outs["cython"]
            if not np.allclose(a, b, rtol=1e-12, atol=1e-12):
                raise SystemExit(f"{name}: backends disagree")
        row = {"kernel": name}
        for b, k in backends.items():
            row[b] = _best(lambda: call(k), args.repeat)
        if len(outs) == 2:
            row["speedup"] = row["python"] / row["cython"]
        results.append(row)

    print(f"{'kernel':40s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for r in results:
        cy = f"{r['cython']:10.5f}" if "cython" in r else f"{'-':>10s}"
        sp = f"{r['speedup']:8.1f}" if "speedup" in r else f"{'-':>8s}"
        print(f"{r['kernel']:40s} {r['python']:10.5f} {cy} {sp}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=1)


if __name__ == "__main__":
    main()
