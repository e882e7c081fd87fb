"""Scratch: cross-check closed-form stats vs MC kernels, numba vs numpy."""
import time

import numpy as np

from cfmimo import channel, closedform, receive, scenario

M, K, L, N = 2, 3, 2, 2
tau_p = 2 * N            # two pilot groups: {0, 2}, {1}
sigma2 = 1e-2

drop = scenario.drop_network(M, K, 1000.0, seed=11)
pairs = scenario.generate_pairs(drop, L, N, seed=11)
# lift betas to O(1) so MC errors are easy to reason about
pairs.beta *= 1e7
pairs.r_full *= 1e7
pairs.factor *= np.sqrt(1e7)
pairs.omega *= 1e7

plan = channel.assign_pilots(K, N, tau_p)
print("groups:", [list(g) for g in plan.groups])
f_p = channel.default_precoders(K, N, 0.2)
ops, est = channel.system_operators(pairs, plan, f_p, sigma2)

rng = np.random.default_rng(5)
f_u = np.zeros((K, N, N), dtype=complex)
for k in range(K):
    g = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    f_u[k] = g * np.sqrt(0.2 / np.trace(g @ g.conj().T).real)

cf = closedform.ClosedFormStats(pairs, est, plan, f_p)
stats_cf = cf.decode_stats(f_u)

n_r = 60_000
t0 = time.time()
stats_np = receive.mc_decode_stats(ops, est, f_u, "mr", n_r, seed=11,
                                   want_second=True, want_sq=True, backend="numpy")
t_np = time.time() - t0
t0 = time.time()
stats_nb = receive.mc_decode_stats(ops, est, f_u, "mr", n_r, seed=11,
                                   want_second=True, want_sq=True, backend="numba")
t_nb = time.time() - t0
print(f"numpy {t_np:.2f}s  numba {t_nb:.2f}s (includes jit compile)")

print("backend agreement z   :", np.abs(stats_np.z - stats_nb.z).max())
print("backend agreement sec :", np.abs(stats_np.second - stats_nb.second).max())
print("backend agreement s   :", np.abs(stats_np.s - stats_nb.s).max())

# --- closed form vs MC, in standard errors ---
se_z = receive.standard_error(stats_np.z, stats_np.z_sq, n_r)
dev_z = np.abs(stats_cf.z - stats_np.z) / np.maximum(se_z, 1e-12)
print("Z   max dev/SE:", dev_z.max())

se_q = receive.standard_error(stats_np.second, stats_np.second_sq, n_r)
dev_q = np.abs(cfq := np.stack([[cf.second_moment(a, b) for b in range(K)] for a in range(K)]) - stats_np.second) / np.maximum(se_q, 1e-12)
print("Q   max dev/SE:", dev_q.max())

dev_g = np.abs(stats_cf.gram - stats_np.gram)
scale = np.abs(stats_cf.gram).max()
print("gram rel dev (vs closed):", dev_g.max() / scale)

# S: closed form says E{V^H V} = Z blocks
dev_s = np.abs(stats_cf.s - stats_np.s).max() / np.abs(stats_cf.s).max()
print("S rel dev:", dev_s)

# --- gram mode (contracted) consistency with second-moment contraction ---
stats_gr = receive.mc_decode_stats(ops, est, f_u, "mr", 2048, seed=11,
                                   want_second=False, backend="numpy")
stats_gr2 = receive.mc_decode_stats(ops, est, f_u, "mr", 2048, seed=11,
                                    want_second=True, backend="numpy")
c = np.abs(stats_gr.gram - stats_gr2.gram).max()
print("gram vs contracted-second consistency:", c)

# --- cross pass vs closed form ---
a_bar = np.zeros((K, M * N, M * N), dtype=complex)
for k in range(K):
    g = rng.standard_normal((M * N, M * N)) + 1j * rng.standard_normal((M * N, M * N))
    a_bar[k] = g @ g.conj().T / (M * N)
mu = np.ones(K)
cross_cf = cf.cross_gram(f_u, a_bar, mu)
cross_np = receive.mc_cross_gram(ops, est, f_u, a_bar, mu, "mr", n_r, seed=11, backend="numpy")
cross_nb = receive.mc_cross_gram(ops, est, f_u, a_bar, mu, "mr", n_r, seed=11, backend="numba")
print("cross backend agreement:", np.abs(cross_np - cross_nb).max())
print("cross closed-vs-mc rel :", np.abs(cross_cf - cross_np).max() / np.abs(cross_cf).max())

# contraction identity: cross from second moments
cross_q = np.zeros_like(cross_cf)
for k in range(K):
    for l in range(K):
        cross_q[k] += mu[l] * receive.contract_cross(stats_np.second[l, k], a_bar[l])
print("cross vs second-contraction:", np.abs(cross_q - cross_np).max() / np.abs(cross_np).max())

# --- LMMSE path: numpy vs numba only (no closed form for it) ---
t0 = time.time()
lm_np = receive.mc_decode_stats(ops, est, f_u, "lmmse", 4096, seed=3, backend="numpy")
t1 = time.time()
lm_nb = receive.mc_decode_stats(ops, est, f_u, "lmmse", 4096, seed=3, backend="numba")
t2 = time.time()
print(f"lmmse numpy {t1-t0:.2f}s numba {t2-t1:.2f}s")
print("lmmse backend agreement:", np.abs(lm_np.gram - lm_nb.gram).max() / np.abs(lm_np.gram).max())
