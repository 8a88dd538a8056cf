"""Compare the numba and pure-numpy Poisson kernels.

    python3 benchmarks/bench_poisson.py [--size N] [--repeat R]

Both kernels are called directly, so the QLINK_NUMBA flag does not matter
here; the numba column is skipped when numba is not importable.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from qlink._backend import HAVE_NUMBA
from qlink.kernels import poisson_fill_numba, poisson_fill_numpy

CASES = {
    "dark counts (0.5)": 0.5,
    "inversion (5)": 5.0,
    "ptrs (50)": 50.0,
    "alice bin (150)": 150.0,
    "jammed eve bin (2e7)": 2e7,
    "mixed eye trace": None,
}


def lam_for(case, n, rng):
    v = CASES[case]
    if v is not None:
        return np.full(n, v)
    return rng.uniform(2.0, 400.0, n)


def best_of(fn, lam, repeat):
    times = []
    for r in range(repeat):
        rng = np.random.Generator(np.random.Philox(r))
        t = time.perf_counter()
        fn(lam, rng)
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--size", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    if HAVE_NUMBA:
        poisson_fill_numba(np.array([1.0, 50.0]), np.random.Generator(np.random.Philox(0)))  # compile
    print(f"{'case':24s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for case in CASES:
        lam = lam_for(case, args.size, rng)
        t_np = best_of(poisson_fill_numpy, lam, args.repeat)
        if HAVE_NUMBA:
            t_nb = best_of(poisson_fill_numba, lam, args.repeat)
            print(f"{case:24s} {t_np * 1e3:10.1f} {t_nb * 1e3:10.1f} {t_np / t_nb:8.2f}")
        else:
            print(f"{case:24s} {t_np * 1e3:10.1f} {'n/a':>10s} {'':>8s}")


if __name__ == "__main__":
    main()
