"""Compiled vs pure-Python simulation kernel.

Runs the same seeded dimer simulation through both backends, checks that the
recorded integers agree exactly, and reports reaction steps per second.

    python benchmarks/bench_kernel.py [--clusters N] [--t-end T] [--repeat R]
"""
import argparse
import time

import numpy as np

from coagemit import _backend, markov
from coagemit.kinetics import ClusterDistribution


def timed(backend, N, t_end, seed, repeat):
    best = float("inf")
    traj = None
    for _ in range(repeat):
        u0 = ClusterDistribution.kmer(1, 2)
        state = markov.init_state(N, u0, seed=seed)
        t0 = time.perf_counter()
        traj = markov.run(state, t_end, t_end / 10, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, traj


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--clusters", type=int, default=200_000)
    ap.add_argument("--t-end", type=float, default=0.9)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = _backend.available()
    results = {}
    for name in backends:
        secs, traj = timed(name, args.clusters, args.t_end, args.seed, args.repeat)
        steps = int(traj.steps[-1])
        results[name] = (secs, traj)
        print(f"{name:>7}: {steps} steps in {secs:.3f} s  ->  {steps / secs:,.0f} steps/s")

    if len(results) == 2:
        a, b = results["python"][1], results["cython"][1]
        same = all(np.array_equal(a.u(n), b.u(n)) for n in a.fractions) \
            and np.array_equal(a.steps, b.steps) and np.array_equal(a.moments, b.moments)
        print(f"identical trajectories: {same}")
        print(f"speedup: {results['python'][0] / results['cython'][0]:.1f}x")
        if not same:
            raise SystemExit(1)
    else:
        print("compiled kernel not built; only the fallback was timed")


if __name__ == "__main__":
    main()
