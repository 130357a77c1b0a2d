"""Time the dense transport solver's compiled lane against the pure-numpy lane.

Both lanes run the same pivot sequence on identical seeded instances, so the
outputs are byte-identical and the comparison is timing only.

Usage:
    python3 benchmarks/bench_backends.py --sizes 50 100 200 400 --trials 3
"""

import argparse
import time

import numpy as np

from flowot import simplex
from flowot.backend import active_backend, backend_reason


def instance(rng, m, n):
    C = rng.random((m, n))
    a = rng.random(m) + 0.05
    a /= a.sum()
    b = rng.random(n) + 0.05
    b /= b.sum()
    return C, a, b


def time_lane(lane, problems, trials):
    best = []
    for C, a, b in problems:
        runs = []
        for _ in range(trials):
            t0 = time.perf_counter()
            simplex.solve_dense(C, a, b, force_lane=lane)
            runs.append(time.perf_counter() - t0)
        best.append(min(runs))
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200, 400])
    parser.add_argument("--trials", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"active backend: {active_backend()} ({backend_reason()})")
    rng = np.random.default_rng(args.seed)
    problems = [instance(rng, n, n) for n in args.sizes]

    if simplex.solve_dense_numba is not None:
        # trigger the jit compile outside the timed region
        simplex.solve_dense(*instance(rng, 10, 10), force_lane="numba")

    t_np = time_lane("numpy", problems, args.trials)
    header = f"{'size':>6}  {'numpy [s]':>10}"
    if simplex.solve_dense_numba is not None:
        t_nb = time_lane("numba", problems, args.trials)
        print(header + f"  {'numba [s]':>10}  {'speedup':>8}")
        for n, a_s, b_s in zip(args.sizes, t_np, t_nb):
            print(f"{n:>6}  {a_s:>10.4f}  {b_s:>10.4f}  {a_s / b_s:>8.1f}x")
    else:
        print("compiled lane unavailable, timing the numpy lane only")
        print(header)
        for n, a_s in zip(args.sizes, t_np):
            print(f"{n:>6}  {a_s:>10.4f}")


if __name__ == "__main__":
    main()
