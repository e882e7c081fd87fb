"""Scratch: I-WMMSE monotonicity, KKT, identity checks on real-scale drops."""
import numpy as np

from cfmimo import channel, closedform, receive, scenario, wmmse

M, K, L, N = 10, 5, 2, 2
tau_c, tau_p = 200, N * ((K + 1) // 2)
sigma2 = 10 ** ((-94 - 30) / 10)   # -94 dBm in watts
p = 0.2

for seed in range(5):
    drop = scenario.drop_network(M, K, 1000.0, seed=seed)
    pairs = scenario.generate_pairs(drop, L, N, seed=seed)
    plan = channel.assign_pilots(K, N, tau_p)
    f_p = channel.default_precoders(K, N, p)
    ops, est = channel.system_operators(pairs, plan, f_p, sigma2)
    cf = closedform.ClosedFormStats(pairs, est, plan, f_p)

    problem = wmmse.WeightedProblem(mu=np.ones(K), p=np.full(K, p))
    f0 = wmmse.initial_precoders(K, N, p)
    state = wmmse.iwmmse_run(problem, cf, sigma2, tau_p, tau_c,
                             i_max=20, epsilon=5e-4, f_init=f0)
    tr = np.array(state.wsr_trace)
    mono = np.all(np.diff(tr) >= -1e-8 * tr[:-1])
    feas = all(
        rec.f_trace.max() <= p + 1e-9 for rec in state.records
    )
    slack = max(
        float(np.max(rec.lam * np.maximum(rec.f_trace - p, 0.0)))
        for rec in state.records
    )
    print(f"seed {seed}: iters={state.iteration} conv={state.converged} "
          f"wsr {tr[0]:.3f}->{tr[-1]:.3f} gain {100*(tr[-1]/tr[0]-1):.1f}% "
          f"mono={mono} feas={feas} slack={slack:.2e}")

    # Appendix-B-style identity: pre * log2 det(inv(E_opt)) == SE_opt
    stats = cf.decode_stats(state.f_u)
    pre = 1 - tau_p / tau_c
    for k in range(K):
        se, a_opt, e_opt = closedform.closed_se_lsfd(cf, state.f_u, sigma2, tau_p, tau_c, k, stats=stats)
        w, _ = np.linalg.eigh(e_opt)
        lhs = -pre * np.sum(np.log2(w))
        assert abs(lhs - se) <= 1e-9 * max(se, 1e-12), (lhs, se)
    print("   identity pre*log2|E^-1| == SE holds at 1e-9")

    # LSFD optimality probes on UE 0
    rng = np.random.default_rng(seed)
    stats0 = cf.decode_stats(f0)
    k = 0
    a_opt = receive.optimal_lsfd(stats0, k, f0[k], sigma2)
    se_opt = receive.uatf_se(stats0, k, a_opt, f0[k], sigma2, tau_p, tau_c)
    se_direct = receive.se_optimal(stats0, k, f0[k], sigma2, tau_p, tau_c)
    assert abs(se_opt - se_direct) <= 1e-9 * se_opt
    worst = 0.0
    for _ in range(100):
        pert = a_opt + 0.1 * np.linalg.norm(a_opt) / np.sqrt(a_opt.size) * (
            rng.standard_normal(a_opt.shape) + 1j * rng.standard_normal(a_opt.shape))
        se_p = receive.uatf_se(stats0, k, pert, f0[k], sigma2, tau_p, tau_c)
        worst = max(worst, se_p - se_opt)
    print(f"   max SE(A_pert)-SE(A_opt) = {worst:.3e} (should be <= 0)")
