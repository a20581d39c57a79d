"""Throughput of the Monte Carlo kernels: compiled extension vs NumPy fallback.

    python3 benchmarks/bench_kernels.py [--paths 2048] [--eps 0.2] [--dt 1e-3]
"""
import argparse
import time

import numpy as np

from kramers_exit import kernels
from kramers_exit.domain import disk
from kramers_exit.potential import isotropic_quadratic


def time_backend(backend, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = kernels.run_paths(*args, bridge=True, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, int(np.sum(out[3]))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--paths", type=int, default=2048)
    ap.add_argument("--eps", type=float, default=0.2)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    p, dom = isotropic_quadratic(), disk()
    args = (p, dom, (0.0, 0.0), a.eps, a.dt, 10**8, 1, 0, a.paths)
    backends = ["python"] + (["compiled"] if kernels._ckernels is not None else [])
    rates = {}
    for b in backends:
        sec, steps = time_backend(b, args, a.repeat)
        rates[b] = steps / sec
        print(f"{b:>9}: {sec:8.3f} s  {steps:>11d} steps  {rates[b] / 1e6:8.2f} Msteps/s")
    if len(rates) == 2:
        print(f"speed-up: {rates['compiled'] / rates['python']:.1f}x")


if __name__ == "__main__":
    main()
