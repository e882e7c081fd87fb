"""Scratch: optimizer on Monte-Carlo statistics (MR cached / L-MMSE repass)."""
import time

import numpy as np

from cfmimo import channel, closedform, receive, scenario, wmmse

M, K, L, N = 6, 4, 2, 2
tau_c = 200
tau_p = N * ((K + 1) // 2)
sigma2 = 10 ** ((-94 - 30) / 10)
p = 0.2

drop = scenario.drop_network(M, K, 1000.0, seed=3)
pairs = scenario.generate_pairs(drop, L, N, seed=3)
plan = channel.assign_pilots(K, N, tau_p)
f_p = channel.default_precoders(K, N, p)
ops, est = channel.system_operators(pairs, plan, f_p, sigma2)

problem = wmmse.WeightedProblem(mu=np.ones(K), p=np.full(K, p))
f0 = wmmse.initial_precoders(K, N, p)

cf = closedform.ClosedFormStats(pairs, est, plan, f_p)
st_cf = wmmse.iwmmse_run(problem, cf, sigma2, tau_p, tau_c, f_init=f0)
print(f"closed : iters={st_cf.iteration} wsr {st_cf.wsr_trace[0]:.3f} -> {st_cf.wsr_trace[-1]:.3f}")

t0 = time.time()
mc_mr = wmmse.MonteCarloProvider(ops, est, "mr", n_r=20000, seed=3)
st_mr = wmmse.iwmmse_run(problem, mc_mr, sigma2, tau_p, tau_c, f_init=f0)
print(f"mc-mr  : iters={st_mr.iteration} wsr {st_mr.wsr_trace[0]:.3f} -> {st_mr.wsr_trace[-1]:.3f} "
      f"({time.time()-t0:.1f}s) monotone={np.all(np.diff(st_mr.wsr_trace) >= -1e-8*np.array(st_mr.wsr_trace[:-1]))}")

t0 = time.time()
mc_lm = wmmse.MonteCarloProvider(ops, est, "lmmse", n_r=2000, seed=3)
st_lm = wmmse.iwmmse_run(problem, mc_lm, sigma2, tau_p, tau_c, f_init=f0)
print(f"mc-lm  : iters={st_lm.iteration} wsr {st_lm.wsr_trace[0]:.3f} -> {st_lm.wsr_trace[-1]:.3f} "
      f"({time.time()-t0:.1f}s)")
print("lmmse trace:", np.round(st_lm.wsr_trace, 4))

# cross-path SE comparison at fixed precoders (criterion-1 style)
stats_cf = cf.decode_stats(f0)
stats_mc = mc_mr.decode_stats(f0)
se_cf = [receive.se_optimal(stats_cf, k, f0[k], sigma2, tau_p, tau_c) for k in range(K)]
se_mc = [receive.se_optimal(stats_mc, k, f0[k], sigma2, tau_p, tau_c) for k in range(K)]
rel = np.abs(np.array(se_cf) - se_mc) / np.array(se_cf)
print("per-UE closed vs mc-mr SE rel err:", np.round(rel, 4), "max", rel.max())
