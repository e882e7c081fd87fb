import numpy as np
import pytest

from cfmimo import channel, closedform, receive, scenario
from cfmimo.numerics import block, herm

from conftest import build_system, max_dev_in_se, random_precoders

N_R_ORACLE = 100_000


@pytest.fixture(scope="module")
def mc_ref(sys_copilot):
    """One shared Monte-Carlo reference for the co-pilot system."""
    s = sys_copilot
    rng = np.random.default_rng(17)
    f_u = random_precoders(s.k, s.n_dim, s.power, rng)
    second = receive.mc_decode_stats(s.ops, s.est, f_u, "mr", N_R_ORACLE, seed=s.seed,
                                     want_second=True, want_sq=True)
    gram = receive.mc_decode_stats(s.ops, s.est, f_u, "mr", N_R_ORACLE, seed=s.seed,
                                   want_sq=True)
    return f_u, second, gram


class TestZMatrix:
    def test_identity_blocks(self):
        z = closedform.z_matrix(np.eye(6, dtype=complex), 3)
        assert np.allclose(z, 2.0 * np.eye(3), atol=1e-14)

    def test_block_diagonal_input(self):
        rng = np.random.default_rng(0)
        blocks = [herm(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
                  for _ in range(2)]
        x = np.zeros((4, 4), dtype=complex)
        x[:2, :2], x[2:, 2:] = blocks
        z = closedform.z_matrix(x, 2)
        assert np.allclose(z, np.diag([np.trace(b) for b in blocks]), atol=1e-14)

    def test_monte_carlo_oracle(self, sys_copilot, mc_ref):
        s = sys_copilot
        _, second, _ = mc_ref
        for k in range(s.k):
            z_closed = np.vstack([
                closedform.z_matrix(s.est.r_hat[m, k], s.n_dim) for m in range(s.m)
            ])
            dev = max_dev_in_se(z_closed, second.z[k], second.z_sq[k], N_R_ORACLE)
            assert dev <= 3.5


class TestXiPMatrices:
    def test_self_pair_reduces_to_estimate_covariance(self, sys_copilot):
        s = sys_copilot
        for m in range(s.m):
            for k in range(s.k):
                ctx = closedform.xi_p_matrices(s.pairs, s.est, s.plan, s.f_p, m, k, k)
                r_hat = s.est.r_hat[m, k]
                scale = np.abs(r_hat).max()
                assert np.abs(ctx.xi - r_hat).max() <= 1e-9 * scale
                # tau_p S Psi S^H telescopes to the estimate covariance
                psi = s.est.psi[m, s.plan.group_of[k]]
                telescoped = s.tau_p * ctx.s_proj @ psi @ ctx.s_proj.conj().T
                assert np.abs(telescoped - r_hat).max() <= 1e-9 * scale

    def test_p_split_reassembles_estimate_covariance(self, sys_copilot):
        s = sys_copilot
        for m in range(s.m):
            for k in range(s.k):
                for l in s.plan.copilots(k):
                    ctx = closedform.xi_p_matrices(s.pairs, s.est, s.plan, s.f_p, m, k, l)
                    total = ctx.p1 + s.tau_p**2 * ctx.p2
                    r_hat = s.est.r_hat[m, k]
                    assert np.abs(total - r_hat).max() <= 1e-9 * np.abs(r_hat).max()

    def test_absent_interferer(self, sys_copilot):
        s = sys_copilot
        import copy

        pairs = copy.deepcopy(s.pairs)
        pairs.r_full[0, 1] = 0.0
        est = channel.pilot_statistics(pairs, s.plan, s.f_p, s.sigma2)
        ctx = closedform.xi_p_matrices(pairs, est, s.plan, s.f_p, 0, 0, 1)
        assert np.all(ctx.xi == 0)
        assert np.abs(ctx.p2).max() <= 1e-30

    def test_rejects_non_copilot(self, sys_mixed):
        s = sys_mixed
        with pytest.raises(ValueError, match="share"):
            closedform.xi_p_matrices(s.pairs, s.est, s.plan, s.f_p, 0, 0, 1)


class TestGammaMatrices:
    def test_zero_precoder(self, sys_copilot):
        s = sys_copilot
        ctx = closedform.xi_p_matrices(s.pairs, s.est, s.plan, s.f_p, 0, 0, 1)
        g1, g2 = closedform.gamma_matrices(
            ctx, s.est.r_hat[0, 0], s.pairs.r_full[0, 1],
            np.zeros((s.n_dim, s.n_dim), dtype=complex),
        )
        assert np.all(g1 == 0) and np.all(g2 == 0)

    def test_scalar_reduction(self):
        # L = N = 1 single UE: gamma1 = fbar * r * rhat
        s = build_system(1, 1, 1, 1, tau_p=1, seed=5)
        ctx = closedform.xi_p_matrices(s.pairs, s.est, s.plan, s.f_p, 0, 0, 0)
        f_bar = np.array([[0.37 + 0j]])
        g1, g2 = closedform.gamma_matrices(
            ctx, s.est.r_hat[0, 0], s.pairs.r_full[0, 0], f_bar
        )
        r = s.pairs.r_full[0, 0][0, 0]
        r_hat = s.est.r_hat[0, 0][0, 0]
        xi = ctx.xi[0, 0]
        assert np.isclose(g1[0, 0], f_bar[0, 0] * r * r_hat, rtol=1e-12)
        assert np.isclose(g2[0, 0], g1[0, 0] + f_bar[0, 0] * abs(xi) ** 2, rtol=1e-12)

    def test_copilot_block_oracle_and_sqrt_variants_rejected(self, sys_copilot, mc_ref):
        """The Wick form matches Monte Carlo; square-root expansions do not."""
        s = sys_copilot
        f_u, _, gram_mc = mc_ref
        f_bar = np.einsum("kab,kcb->kac", f_u, f_u.conj())
        n = s.n_dim
        variant_dev = {False: 0.0, True: 0.0}
        for (k, l) in [(0, 1), (1, 0), (0, 0), (1, 1)]:
            for m in range(s.m):
                ctx = closedform.xi_p_matrices(s.pairs, s.est, s.plan, s.f_p, m, k, l)
                _, g2 = closedform.gamma_matrices(
                    ctx, s.est.r_hat[m, k], s.pairs.r_full[m, l], f_bar[l]
                )
                mc_block = block(gram_mc.gram[k, l], m, m, n)
                sq_block = block(gram_mc.gram_sq[k, l], m, m, n)
                se = receive.standard_error(mc_block, sq_block, N_R_ORACLE)
                floor = 1e-9 * np.abs(mc_block).max()
                dev = np.abs(g2 - mc_block) / np.maximum(se, floor)
                assert dev.max() <= 3.5
                for symmetrized in (False, True):
                    bad = closedform.gamma2_sqrt_variant(
                        ctx, s.est.r_hat[m, k], s.pairs.r_full[m, l],
                        f_bar[l], symmetrized,
                    )
                    dev_bad = np.abs(bad - mc_block) / np.maximum(se, floor)
                    variant_dev[symmetrized] = max(variant_dev[symmetrized], dev_bad.max())
        # each square-root expansion disagrees with the oracle somewhere
        # (they coincide with the exact form only on commuting blocks)
        assert variant_dev[False] > 5.0
        assert variant_dev[True] > 5.0


class TestTMatrices:
    def test_non_copilot_has_no_coupling_term(self, sys_mixed):
        s = sys_mixed
        f_bar = np.eye(s.n_dim, dtype=complex) * 0.1
        g1 = np.stack([
            closedform.gamma_matrices(
                closedform.xi_p_matrices(s.pairs, s.est, s.plan, s.f_p, m, 0, 0),
                s.est.r_hat[m, 0], s.pairs.r_full[m, 1], f_bar,
            )[0]
            for m in range(s.m)
        ])
        t1, t2 = closedform.t_matrices(g1, None, None, f_bar, copilot=False)
        assert np.all(t2 == 0)
        # t1 is block diagonal
        off = t1.copy()
        for m in range(s.m):
            sl = slice(m * s.n_dim, (m + 1) * s.n_dim)
            off[sl, sl] = 0
        assert np.all(off == 0)

    def test_single_ap_single_coupling_block(self, sys_copilot):
        s = sys_copilot
        f_bar = 0.05 * np.eye(s.n_dim, dtype=complex)
        k, l, m = 0, 1, 0
        ctx = closedform.xi_p_matrices(s.pairs, s.est, s.plan, s.f_p, m, k, l)
        g1, g2 = closedform.gamma_matrices(
            ctx, s.est.r_hat[m, k], s.pairs.r_full[m, l], f_bar
        )
        t1, t2 = closedform.t_matrices(g1[None], g2[None], np.zeros((1, s.n_dim, s.n_dim)),
                                       f_bar, copilot=True)
        assert np.allclose(t2, g2 - g1, atol=1e-15)

    def test_master_oracle_full_gram(self, sys_copilot, mc_ref):
        s = sys_copilot
        f_u, _, gram_mc = mc_ref
        stats_cf = s.cf.decode_stats(f_u)
        for k in range(s.k):
            for l in range(s.k):
                dev = max_dev_in_se(stats_cf.gram[k, l], gram_mc.gram[k, l],
                                    gram_mc.gram_sq[k, l], N_R_ORACLE)
                assert dev <= 3.5


class TestSecondMoment:
    def test_four_cases_against_monte_carlo(self, sys_copilot, mc_ref):
        s = sys_copilot
        _, second, _ = mc_ref
        for a in range(s.k):
            for b in range(s.k):
                q_cf = s.cf.second_moment(a, b)
                dev = max_dev_in_se(q_cf, second.second[a, b],
                                    second.second_sq[a, b], N_R_ORACLE)
                assert dev <= 3.5

    def test_independent_pairs_are_zero_or_blockdiag(self, sys_mixed):
        s = sys_mixed
        # UEs 0 and 1 are in different pilot groups
        q = s.cf.second_moment(0, 1)
        n, mn = s.n_dim, s.m * s.n_dim
        for m1 in range(s.m):
            for m2 in range(s.m):
                if m1 == m2:
                    continue
                blk = q[:, m1 * n:(m1 + 1) * n, :, m2 * n:(m2 + 1) * n]
                assert np.all(blk == 0)
        assert np.all(s.cf.mean_g(0, 1) == 0)

    def test_scalar_entry_formula(self, sys_mixed):
        # independent pair, same AP: plain trace product of covariances
        s = sys_mixed
        a, b, m = 0, 1, 1
        val = s.cf.gg_entry(a, b, m, m, 0, 1, 0, 1)
        expect = np.trace(
            block(s.pairs.r_full[m, b], 0, 1, s.l_dim)
            @ block(s.est.r_hat[m, a], 1, 0, s.l_dim)
        )
        assert np.isclose(val, expect, rtol=1e-12)

    def test_gg_entry_matches_tensor(self, sys_copilot):
        s = sys_copilot
        q = s.cf.second_moment(0, 1)
        n = s.n_dim
        for m1 in range(s.m):
            for m2 in range(s.m):
                for ni in range(n):
                    for ii in range(n):
                        for p in range(n):
                            for p2 in range(n):
                                val = s.cf.gg_entry(0, 1, m1, m2, ni, ii, p, p2)
                                assert np.isclose(
                                    val, q[ni, m1 * n + p, ii, m2 * n + p2], rtol=1e-12
                                )


class TestWeightedGram:
    def test_zero_weight(self, sys_copilot):
        s = sys_copilot
        out = s.cf.weighted_gram(0, 1, np.zeros((s.m * s.n_dim,) * 2, dtype=complex))
        assert np.all(out == 0)

    def test_identity_weight_trace_identity(self, sys_copilot):
        s = sys_copilot
        mn = s.m * s.n_dim
        out = s.cf.weighted_gram(0, 1, np.eye(mn, dtype=complex))
        q = s.cf.second_moment(0, 1)
        for n in range(s.n_dim):
            expect = np.trace(q[n, :, n, :])
            assert np.isclose(out[n, n], expect, rtol=1e-10)

    def test_monte_carlo_oracle(self, sys_copilot, mc_ref):
        s = sys_copilot
        _, second, _ = mc_ref
        rng = np.random.default_rng(31)
        mn = s.m * s.n_dim
        g = rng.standard_normal((mn, mn)) + 1j * rng.standard_normal((mn, mn))
        a_bar = g @ g.conj().T / mn
        for (a, b) in [(0, 1), (1, 0), (0, 0)]:
            closed = s.cf.weighted_gram(a, b, a_bar)
            mc = receive.contract_cross(second.second[a, b], a_bar)
            # contraction of entrywise-3.5-sigma tensors: compare relative
            assert np.abs(closed - mc).max() <= 0.05 * np.abs(closed).max()

    def test_lemma_identity_is_exact_on_finite_samples(self):
        rng = np.random.default_rng(41)
        m_dim, n_dim, n_s = 5, 3, 40
        xs = rng.standard_normal((n_s, m_dim, n_dim)) + 1j * rng.standard_normal((n_s, m_dim, n_dim))
        y = rng.standard_normal((m_dim, m_dim)) + 1j * rng.standard_normal((m_dim, m_dim))
        direct = np.mean([x.conj().T @ y @ x for x in xs], axis=0)
        entry = np.empty((n_dim, n_dim), dtype=complex)
        for n in range(n_dim):
            for i in range(n_dim):
                second = np.mean([np.outer(x[:, i], x[:, n].conj()) for x in xs], axis=0)
                entry[n, i] = np.trace(y @ second)
        assert np.abs(direct - entry).max() <= 1e-12 * np.abs(direct).max()


class TestClosedSeLsfd:
    def test_zero_precoders(self, sys_copilot):
        s = sys_copilot
        f_u = np.zeros((s.k, s.n_dim, s.n_dim), dtype=complex)
        se, a_opt, e_opt = closedform.closed_se_lsfd(s.cf, f_u, s.sigma2, s.tau_p, 200, 0)
        assert se == 0.0
        assert np.allclose(e_opt, np.eye(s.n_dim), atol=1e-12)

    def test_matches_monte_carlo_path(self):
        # enough APs that every UE has a meaningful SE (relative tolerances
        # are noise-dominated for UEs in deep fades)
        s = build_system(5, 4, 2, 2, tau_p=4, seed=0)
        rng = np.random.default_rng(19)
        f_u = random_precoders(s.k, s.n_dim, s.power, rng)
        stats_mc = receive.mc_decode_stats(s.ops, s.est, f_u, "mr", 20_000, seed=s.seed)
        for k in range(s.k):
            se_cf, _, _ = closedform.closed_se_lsfd(s.cf, f_u, s.sigma2, s.tau_p, 200, k)
            se_mc = receive.se_optimal(stats_mc, k, f_u[k], s.sigma2, s.tau_p, 200)
            assert abs(se_cf - se_mc) <= 0.02 * se_cf

    def test_two_code_paths_identical(self, sys_mixed):
        s = sys_mixed
        rng = np.random.default_rng(23)
        f_u = random_precoders(s.k, s.n_dim, s.power, rng)
        stats = s.cf.decode_stats(f_u)
        for k in range(s.k):
            _, a_opt, _ = closedform.closed_se_lsfd(s.cf, f_u, s.sigma2, s.tau_p, 200, k)
            a_ref = receive.optimal_lsfd(stats, k, f_u[k], s.sigma2)
            assert np.abs(a_opt - a_ref).max() <= 1e-10 * np.abs(a_ref).max()
