#!/usr/bin/env python3
"""Benchmark the Monte-Carlo kernels: numba backend vs numpy fallback.

Runs the realization kernels that dominate simulator runtime (decode
statistics in contracted and tensor modes, and the precoder-update cross
pass) on a representative drop and reports per-backend wall times.

    python benchmarks/bench_backends.py [--n-r 4000] [--m 10] [--k 5]
                                        [--l 2] [--n 4]
"""

import argparse
import time

import numpy as np

from cfmimo import channel, kernels, scenario
from cfmimo.backend import HAVE_NUMBA


def build(m, k, l_dim, n_dim, seed=0):
    sigma2 = 10 ** ((-94 - 30) / 10)
    tau_p = n_dim * ((k + 1) // 2)
    drop = scenario.drop_network(m, k, 1000.0, seed=seed)
    pairs = scenario.generate_pairs(drop, l_dim, n_dim, seed=seed)
    plan = channel.assign_pilots(k, n_dim, tau_p)
    f_p = channel.default_precoders(k, n_dim, 0.2)
    ops, est = channel.system_operators(pairs, plan, f_p, sigma2)
    f_u = channel.default_precoders(k, n_dim, 0.2)
    f_bar = np.einsum("kab,kcb->kac", f_u, f_u.conj())
    return ops, est, f_u, f_bar


def run_case(name, fn, backends, repeats=3):
    print(f"\n{name}")
    base = None
    for backend in backends:
        fn(backend)                       # warm-up (jit compile, caches)
        best = min(
            (lambda t0: (fn(backend), time.perf_counter() - t0)[1])(time.perf_counter())
            for _ in range(repeats)
        )
        if base is None:
            base = best
        print(f"  {backend:>6}: {best * 1e3:9.1f} ms   x{base / best:5.2f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-r", type=int, default=4000)
    ap.add_argument("--m", type=int, default=10)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--l", type=int, default=2)
    ap.add_argument("--n", type=int, default=4)
    args = ap.parse_args()

    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    if len(backends) == 1:
        print("numba not importable; benchmarking the numpy fallback only")

    ops, est, f_u, f_bar = build(args.m, args.k, args.l, args.n)
    cps_zero = np.zeros((args.m, args.l, args.l), dtype=complex)
    from cfmimo.receive import cprime_sum

    cps = cprime_sum(est, f_bar)
    mn = args.m * args.n
    rng = np.random.default_rng(0)
    g = rng.standard_normal((mn, mn)) + 1j * rng.standard_normal((mn, mn))
    a_bar = np.stack([g @ g.conj().T / mn] * args.k)

    print(f"M={args.m} K={args.k} L={args.l} N={args.n} n_r={args.n_r}")
    run_case(
        "decode statistics, MR, contracted Grams",
        lambda b: kernels.decode_pass(ops, f_u, f_bar, "mr", cps_zero, args.n_r, 0,
                                      backend=b),
        backends,
    )
    run_case(
        "decode statistics, MR, full second-moment tensors",
        lambda b: kernels.decode_pass(ops, f_u, f_bar, "mr", cps_zero, args.n_r, 0,
                                      want_second=True, backend=b),
        backends,
    )
    run_case(
        "decode statistics, L-MMSE, contracted Grams",
        lambda b: kernels.decode_pass(ops, f_u, f_bar, "lmmse", cps, args.n_r, 0,
                                      backend=b),
        backends,
    )
    run_case(
        "precoder-update cross pass, L-MMSE",
        lambda b: kernels.cross_pass(ops, f_u, f_bar, "lmmse", cps, a_bar,
                                     args.n_r, 0, backend=b),
        backends,
    )


if __name__ == "__main__":
    main()
