"""Benchmark the hot array kernels: compiled path vs pure-numpy fallback.

The package selects between the two at import time (HYBRIDSIM_NO_NUMBA=1
forces the fallback); this script times both implementations directly on the
same inputs and checks they agree bitwise.

Usage: python3 scripts/bench_kernels.py [--repeats N]
"""
import argparse
import time

import numpy as np

from hybridsim._kernels import (
    HAS_NUMBA,
    clause_bests_numpy,
    hermite_eval_many_numpy,
)

if HAS_NUMBA:
    from hybridsim._kernels import clause_bests_numba, hermite_eval_many_numba


def make_hermite_case(n_break=4000, n_query=200000, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    times = np.cumsum(rng.uniform(1e-4, 1e-2, n_break))
    states = rng.standard_normal((n_break, dim))
    derivs = rng.standard_normal((n_break, dim))
    tq = rng.uniform(times[0], times[-1], n_query)
    tq.sort()
    return times, states, derivs, tq


def make_clause_case(n_a=4000, n_b=4000, dim=4, eps=0.05, seed=1):
    rng = np.random.default_rng(seed)
    ta = np.sort(rng.uniform(0.0, 3.0, n_a))
    tb = np.sort(rng.uniform(0.0, 3.0, n_b))
    xa = rng.standard_normal((n_a, dim))
    xb = xa[: n_b] + 0.01 * rng.standard_normal((n_b, dim))
    return ta, xa, tb, xb, eps, 1e-12


def bench(fn, args, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    ns = ap.parse_args()

    cases = [
        ("hermite_eval_many", make_hermite_case(), hermite_eval_many_numpy,
         hermite_eval_many_numba if HAS_NUMBA else None),
        ("clause_bests", make_clause_case(), clause_bests_numpy,
         clause_bests_numba if HAS_NUMBA else None),
    ]
    if not HAS_NUMBA:
        print("numba not importable: timing the numpy fallback only")
    for name, args, fn_np, fn_nb in cases:
        t_np, out_np = bench(fn_np, args, ns.repeats)
        line = f"{name}: numpy {t_np * 1e3:8.2f} ms"
        if fn_nb is not None:
            fn_nb(*args)  # compile outside the timed region
            t_nb, out_nb = bench(fn_nb, args, ns.repeats)
            same = np.array_equal(np.asarray(out_np), np.asarray(out_nb))
            line += f" | numba {t_nb * 1e3:8.2f} ms | speedup {t_np / t_nb:5.2f}x"
            line += f" | bitwise equal: {same}"
            if not same:
                raise SystemExit(f"kernel outputs diverged for {name}")
        print(line)


if __name__ == "__main__":
    main()
