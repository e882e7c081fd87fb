import numpy as np
import pytest

from cfmimo import channel, scenario
from cfmimo.numerics import herm

from conftest import build_system


class TestAssignPilots:
    def test_paper_sharing_pattern(self):
        # K=10, N=4, tau_p = K*N/2 = 20: five matrices, two UEs each
        plan = channel.assign_pilots(10, 4, 20)
        assert plan.n_groups == 5
        assert all(len(g) == 2 for g in plan.groups)

    def test_fully_orthogonal(self):
        plan = channel.assign_pilots(4, 2, 8)
        for k in range(4):
            assert list(plan.copilots(k)) == [k]

    def test_symmetry_exhaustive(self):
        for k_total in range(1, 13):
            plan = channel.assign_pilots(k_total, 2, 4)
            for a in range(k_total):
                for b in range(k_total):
                    assert (b in plan.copilots(a)) == (a in plan.copilots(b))
                assert a in plan.copilots(a)

    def test_rejects_bad_tau_p(self):
        with pytest.raises(ValueError, match="multiple"):
            channel.assign_pilots(4, 3, 4)


class TestSampleChannel:
    def test_zero_coupling(self):
        pc = scenario.PairCorrelation(
            u_r=np.eye(2, dtype=complex), u_t=np.eye(2, dtype=complex),
            omega=np.zeros((2, 2)), beta=1.0,
        )
        h = channel.sample_channel(pc, seed=0)
        assert np.array_equal(h, np.zeros((2, 2)))

    def test_power_and_covariance(self):
        pc = scenario.synthesize_coupling(2, 2, beta=1.5, seed=1)
        rng = np.random.default_rng(2)
        n = 100_000
        hs = np.stack([channel.sample_channel(pc, rng) for _ in range(2000)])
        power = np.mean(np.abs(hs) ** 2) * 1.0       # E||H||_F^2 / (L N)
        assert abs(power - 1.5) / 1.5 <= 0.05        # 2000 samples, few-% accuracy
        # tighter power check with the vectorized factor
        g = (rng.standard_normal((n, 4)) + 1j * rng.standard_normal((n, 4))) / np.sqrt(2)
        h = g @ scenario.sampling_factor(pc).T
        power = np.mean(np.abs(h) ** 2)
        assert abs(power - 1.5) / 1.5 <= 0.01


def _sample_estimates(system, n_r, seed):
    """Vectorized sampler of (h, h_hat) for every pair of a small system."""
    ops = system.ops
    m, k, ln = ops.m, ops.k, ops.l_dim * ops.n_dim
    rng = np.random.default_rng(seed)
    g = (rng.standard_normal((n_r, m, k, ln)) + 1j * rng.standard_normal((n_r, m, k, ln))) / np.sqrt(2)
    h = np.einsum("mkab,rmkb->rmka", ops.factor, g)
    q = (rng.standard_normal((n_r, m, ops.n_groups, ln))
         + 1j * rng.standard_normal((n_r, m, ops.n_groups, ln))) * ops.noise_std
    y = q.copy()
    for ki in range(k):
        y[:, :, ops.group_of[ki]] += np.einsum("ab,rmb->rma", ops.pilot_prop[ki], h[:, :, ki])
    h_hat = np.empty_like(h)
    for ki in range(k):
        h_hat[:, :, ki] = np.einsum("mab,rmb->rma", ops.w_est[:, ki], y[:, :, ops.group_of[ki]])
    return h, h_hat, y


class TestPilotStatistics:
    def test_iid_scalar_reduction(self):
        # P_k = {k}, F = sqrt(p/N) I, R = beta I: per-entry scalar MMSE
        l_dim, n_dim, beta, p, sigma2, tau_p = 2, 2, 0.3, 0.2, 0.05, 4
        pairs = scenario.PairSet(
            beta=np.array([[beta]]),
            u_r=np.eye(l_dim, dtype=complex)[None, None],
            u_t=np.eye(n_dim, dtype=complex)[None, None],
            omega=beta * np.ones((1, 1, l_dim, n_dim)),
            r_full=beta * np.eye(l_dim * n_dim, dtype=complex)[None, None],
            factor=np.sqrt(beta) * np.eye(l_dim * n_dim, dtype=complex)[None, None],
        )
        plan = channel.assign_pilots(1, n_dim, tau_p)
        f_p = channel.default_precoders(1, n_dim, p)
        est = channel.pilot_statistics(pairs, plan, f_p, sigma2)
        snr = tau_p * (p / n_dim) * beta
        expect = snr / (snr + sigma2) * beta
        assert np.allclose(est.r_hat[0, 0], expect * np.eye(4), rtol=1e-9)

    def test_perfect_estimation_limit(self):
        system = build_system(1, 2, 2, 2, tau_p=4, seed=3, sigma2=1.0, power=1.0)
        # raise effective pilot SNR to 1e6 by shrinking noise
        strong = channel.pilot_statistics(
            system.pairs, system.plan, system.f_p,
            sigma2=float(system.tau_p * 0.5 * system.pairs.beta.min() / 1e6),
        )
        for m in range(1):
            for k in range(2):
                r = system.pairs.r_full[m, k]
                gap = np.linalg.norm(strong.r_hat[m, k] - r) / np.linalg.norm(r)
                assert gap <= 1e-3

    def test_error_covariance_splits_exactly(self, sys_mixed):
        est, pairs = sys_mixed.est, sys_mixed.pairs
        scale = np.abs(pairs.r_full).max(axis=(-2, -1), keepdims=True)
        assert np.all(np.abs(est.r_hat + est.c - pairs.r_full) <= 1e-9 * scale)
        for m in range(pairs.m):
            for k in range(pairs.k):
                for mat in (est.r_hat[m, k], est.c[m, k]):
                    ev = np.linalg.eigvalsh(herm(mat))
                    assert ev.min() >= -1e-9 * max(ev.max(), 1e-300)
        # psi dominates the noise floor
        for m in range(pairs.m):
            for g in range(sys_mixed.plan.n_groups):
                ev = np.linalg.eigvalsh(herm(est.psi[m, g]))
                assert ev.min() >= sys_mixed.sigma2 * (1 - 1e-9)

    def test_estimator_covariance_oracle(self, sys_copilot):
        n_r = 100_000
        h, h_hat, y = _sample_estimates(sys_copilot, n_r, seed=21)
        est = sys_copilot.est
        for m in range(sys_copilot.m):
            for k in range(sys_copilot.k):
                emp = np.einsum("ra,rb->ab", h_hat[:, m, k], h_hat[:, m, k].conj()) / n_r
                diag = np.real(np.diag(est.r_hat[m, k]))
                se = np.sqrt(np.outer(diag, diag) / n_r) + 1e-12 * diag.max()
                assert np.all(np.abs(emp - est.r_hat[m, k]) <= 3.5 * se)

    def test_projection_covariance_scaling(self, sys_copilot):
        # cov(y) = tau_p * Psi
        n_r = 100_000
        _, _, y = _sample_estimates(sys_copilot, n_r, seed=22)
        est = sys_copilot.est
        tau_p = sys_copilot.tau_p
        for m in range(sys_copilot.m):
            emp = np.einsum("ra,rb->ab", y[:, m, 0], y[:, m, 0].conj()) / n_r
            expect = tau_p * est.psi[m, 0]
            diag = np.real(np.diag(expect))
            se = np.sqrt(np.outer(diag, diag) / n_r)
            assert np.all(np.abs(emp - expect) <= 3.5 * se)


class TestMmseEstimate:
    def test_orthogonality_and_error_covariance(self, sys_copilot):
        n_r = 100_000
        h, h_hat, _ = _sample_estimates(sys_copilot, n_r, seed=23)
        h_tilde = h - h_hat
        est = sys_copilot.est
        for m in range(sys_copilot.m):
            for k in range(sys_copilot.k):
                cross = np.einsum("ra,rb->ab", h_hat[:, m, k], h_tilde[:, m, k].conj()) / n_r
                dr = np.real(np.diag(est.r_hat[m, k]))
                dc = np.real(np.diag(est.c[m, k]))
                se = np.sqrt(np.outer(dr, dc) / n_r) + 1e-12 * dr.max()
                assert np.all(np.abs(cross) <= 3.5 * se)
                emp_c = np.einsum("ra,rb->ab", h_tilde[:, m, k], h_tilde[:, m, k].conj()) / n_r
                se_c = np.sqrt(np.outer(dc, dc) / n_r) + 1e-12 * dc.max()
                assert np.all(np.abs(emp_c - est.c[m, k]) <= 3.5 * se_c)

    def test_single_instance_api_decomposition(self, sys_copilot):
        s = sys_copilot
        h_all = {
            k: channel.sample_channel(s.pairs.pair(0, k), seed=100 + k)
            for k in range(s.k)
        }
        real = channel.mmse_estimate(h_all, s.est, s.plan, s.f_p, 0, 0, noise_seed=5)
        assert np.array_equal(real.h, real.h_hat + real.h_tilde)
        assert real.h_hat.shape == (s.l_dim, s.n_dim)

    def test_noiseless_projection(self):
        # single UE, invertible signal subspace, vanishing noise: the
        # estimate recovers the channel projection (here: everything)
        pc = scenario.synthesize_coupling(2, 2, beta=1.0, seed=9)
        r = scenario.full_correlation(pc)
        pairs = scenario.PairSet(
            beta=np.array([[1.0]]),
            u_r=pc.u_r[None, None], u_t=pc.u_t[None, None],
            omega=pc.omega[None, None],
            r_full=r[None, None],
            factor=scenario.sampling_factor(pc)[None, None],
        )
        plan = channel.assign_pilots(1, 2, 2)
        f_p = channel.default_precoders(1, 2, 1.0)
        est = channel.pilot_statistics(pairs, plan, f_p, sigma2=1e-20)
        h_all = {0: channel.sample_channel(pc, seed=1)}
        real = channel.mmse_estimate(h_all, est, plan, f_p, 0, 0, noise_seed=2)
        resid = np.linalg.norm(real.h_tilde) / np.linalg.norm(real.h)
        assert resid <= 1e-6
