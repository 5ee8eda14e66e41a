"""Compare the numba kernels with the pure-numpy/Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--sites K]
"""
import argparse
import time

import numpy as np

from mmsmo import mobility as mob
from mmsmo._accel import HAS_NUMBA, py_func
from mmsmo.geometry import MapGenConfig, generate_urban_map, los_many
from mmsmo.mobility import MobilityConfig


def best_of(fn, repeat):
    fn()  # warm-up (JIT compile / caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_viewshed(umap, repeat, n_sites):
    sites = umap.candidate_sites[:n_sites]
    pts = umap.sa_points

    def run(use_numba):
        return [los_many(umap.height, s, pts, use_numba=use_numba) for s in sites]

    a = run(True)
    b = run(False)
    assert all(np.array_equal(x, y) for x, y in zip(a, b)), "LOS paths disagree"
    n = len(sites) * len(pts)
    return n, best_of(lambda: run(True), repeat), best_of(lambda: run(False), repeat)


def bench_mobility(umap, repeat, n_ue=200, steps=20):
    rng = np.random.default_rng(0)
    s = mob.init_episode(umap, MobilityConfig(), n_ue, rng)
    c = s.centers[s.community]
    dist = rng.uniform(0, 400, (steps, n_ue))

    # every call starts from the same state: chained calls drift apart after
    # many reflections because libm and LLVM differ in the last ulp
    def run(kernel):
        return [kernel(s.pos, s.heading, d, s.local, c, s.radius, umap.height)[0] for d in dist]

    assert all(np.allclose(x, y, atol=1e-9) for x, y in zip(run(mob.advance_kernel), run(py_func(mob.advance_kernel))))
    return n_ue * steps, best_of(lambda: run(mob.advance_kernel), repeat), best_of(lambda: run(py_func(mob.advance_kernel)), repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--sites", type=int, default=20, help="candidate sites in the viewshed run")
    args = ap.parse_args()
    if not HAS_NUMBA:
        raise SystemExit("numba is not installed")
    umap = generate_urban_map(MapGenConfig(seed=0))
    print(f"{'kernel':<12}{'work':>10}{'numba s':>11}{'numpy s':>11}{'speedup':>9}")
    for name, (n, t_nb, t_np) in (("viewshed", bench_viewshed(umap, args.repeat, args.sites)),
                                  ("mobility", bench_mobility(umap, args.repeat))):
        print(f"{name:<12}{n:>10}{t_nb:>11.4f}{t_np:>11.4f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
