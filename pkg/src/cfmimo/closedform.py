"""Exact (closed-form) decode statistics for maximum-ratio combining.

With MR combining the combiner equals the channel estimate, and every
decode statistic is a polynomial in jointly Gaussian vectors, so means,
Grams and full second moments have exact expressions in the pilot-phase
covariances.  The building blocks are:

* ``z``           -- E{Hhat^H H} per (m, k); entry (n, n') is the trace of
                     the (n', n) block of the estimate covariance,
* ``lam``         -- E{Hhat_ma^H Hhat_mb} for co-pilot pairs (a, b), whose
                     stack over APs is the mean E{G_ab},
* ``bt`` tables   -- block-product traces tr(R_mb^{ni} Rhat_ma^{p'p}) that
                     carry the "independent fluctuation" part of every
                     second moment.

The mixed fourth moments of (estimate, channel) pairs sharing a pilot are
evaluated with Wick's theorem for circular complex Gaussians:

    E{hhat_p^H h_n h_i^H hhat_p'} =
        tr(X^{np}) tr(X^H^{p'i}) + tr(R^{ni} Rhat^{p'p})

with X the estimate/channel cross-covariance.  Expanding the product term
through matrix square roots is not valid here (the cross-covariance has a
nontrivial polar factor), which a Monte-Carlo oracle confirms; see
``gamma2_sqrt_variant`` for the rejected expansions kept for diagnostics.
"""

from dataclasses import dataclass

import numpy as np

from .channel import f_tilde
from .numerics import (
    as_blocks,
    block_trace_matrix,
    block_trace_table,
    herm,
    hermitian_sqrt,
    solve_hpd,
)
from .receive import DecodeStats, MR, mse_matrix_opt, optimal_lsfd, se_optimal


def z_matrix(r_hat, n_dim):
    """Mean estimate Gram E{Hhat^H Hhat}: entry (n, n') is tr(Rhat^{n'n})."""
    l_dim = r_hat.shape[0] // n_dim
    return block_trace_matrix(r_hat, l_dim)


def est_cross_cov(pairs, est, plan, f_p, m, a, b):
    """Cross-covariance E{hhat_ma hhat_mb^H} (= E{hhat_ma h_mb^H}) for
    co-pilot UEs a and b.

    Equals tau_p R_ma Ftilde_a^H Psi^{-1} Ftilde_b R_mb; both UEs project
    onto the same pilot matrix, so they share the Gram Psi.
    """
    if b not in plan.copilots(a):
        raise ValueError(f"UEs {a} and {b} do not share a pilot matrix")
    l_dim = pairs.l_dim
    psi = est.psi[m, plan.group_of[a]]
    fta = f_tilde(f_p[a], l_dim)
    ftb = f_tilde(f_p[b], l_dim)
    ra = pairs.r_full[m, a]
    rb = pairs.r_full[m, b]
    return plan.tau_p * ra @ fta.conj().T @ solve_hpd(psi, ftb @ rb)


@dataclass
class ClosedFormContext:
    """Per-(m, k, l) closed-form intermediates for a co-pilot pair.

    ``xi`` is the channel/estimate cross kernel E{hhat_ml h_mk^H},
    ``s_proj`` the estimator matrix of UE k, and ``p1``/``p2`` split the
    estimate covariance of UE k into the part independent of UE l's
    channel and the part driven by it: p1 + tau_p^2 p2 = Rhat_mk.
    """

    xi: np.ndarray        # (LN, LN)
    s_proj: np.ndarray    # (LN, LN)
    p1: np.ndarray        # (LN, LN)
    p2: np.ndarray        # (LN, LN)
    r_sqrt: np.ndarray    # (LN, LN) principal square root of R_ml
    p2_sqrt: np.ndarray   # (LN, LN) principal square root of p2
    tau_p: int


def xi_p_matrices(pairs, est, plan, f_p, m, k, l):
    """Closed-form intermediates for estimating UE k against UE l's channel."""
    if l not in plan.copilots(k):
        raise ValueError(f"UEs {k} and {l} do not share a pilot matrix")
    tau_p = plan.tau_p
    l_dim = pairs.l_dim
    psi = est.psi[m, plan.group_of[k]]
    ftl = f_tilde(f_p[l], l_dim)
    rl = pairs.r_full[m, l]
    s_proj = est.w_est[m, k]
    frf = ftl @ rl @ ftl.conj().T
    p1 = herm(tau_p * s_proj @ (psi - tau_p * frf) @ s_proj.conj().T)
    p2 = herm(s_proj @ frf @ s_proj.conj().T)
    return ClosedFormContext(
        xi=est_cross_cov(pairs, est, plan, f_p, m, l, k),
        s_proj=s_proj,
        p1=p1,
        p2=p2,
        r_sqrt=hermitian_sqrt(herm(rl)),
        p2_sqrt=hermitian_sqrt(p2),
        tau_p=tau_p,
    )


def gamma_matrices(ctx, r_hat_mk, r_ml, f_bar_l):
    """Per-AP diagonal blocks of E{G_kl Fbar_l G_kl^H} for MR combining.

    Returns (gamma1, gamma2): gamma1 is the independent-fluctuation part
    (the whole block when the UEs do not share a pilot); gamma2 adds the
    pilot-sharing coupling and is the block for co-pilot UEs.
    """
    n_dim = f_bar_l.shape[0]
    l_dim = r_ml.shape[0] // n_dim
    table = block_trace_table(r_ml, r_hat_mk, l_dim)
    gamma1 = np.einsum("ab,abnq->nq", f_bar_l, table)
    # lam[p, n] = tr(xi^{np}) is E{Hhat_mk^H Hhat_ml}
    lam = block_trace_matrix(ctx.xi, l_dim)
    gamma2 = gamma1 + lam @ f_bar_l @ lam.conj().T
    return gamma1, gamma2


def gamma2_sqrt_variant(ctx, r_hat_mk, r_ml, f_bar_l, symmetrized):
    """Rejected square-root expansions of the pilot-coupling term.

    Kept for diagnostics: both the plain and the symmetrized index pairing
    replace the cross kernel by a product of principal square roots, which
    drops its polar factor and fails the Monte-Carlo oracle whenever the
    co-pilot correlation matrices do not commute.
    """
    n_dim = f_bar_l.shape[0]
    l_dim = r_ml.shape[0] // n_dim
    table = block_trace_table(r_ml, r_hat_mk, l_dim)
    gamma = np.einsum("ab,abnq->nq", f_bar_l, table).astype(complex)
    pt = as_blocks(ctx.p2_sqrt, l_dim)
    rt = as_blocks(ctx.r_sqrt, l_dim)
    tau2 = float(ctx.tau_p) ** 2
    for n in range(n_dim):
        for n2 in range(n_dim):
            acc = 0.0 + 0.0j
            for i in range(n_dim):
                for i2 in range(n_dim):
                    if symmetrized:
                        fac1 = sum(np.trace(pt[q1, n] @ rt[i2, q1]) for q1 in range(n_dim))
                        fac2 = sum(np.trace(pt[n2, q2] @ rt[q2, i]) for q2 in range(n_dim))
                        prod = fac1 * fac2
                    else:
                        prod = sum(
                            np.trace(pt[q1, n] @ rt[i2, q2]) * np.trace(pt[n2, q2] @ rt[q2, i])
                            for q1 in range(n_dim)
                            for q2 in range(n_dim)
                        )
                    acc += f_bar_l[i2, i] * tau2 * prod
            gamma[n, n2] += acc
    return gamma


def t_matrices(gamma1, gamma2, lam, f_bar_l, copilot):
    """Assemble the MN x MN Gram terms from per-AP blocks.

    ``t1`` is block-diagonal in the per-AP gamma1 blocks; ``t2`` (only for
    co-pilot pairs) has gamma2 - gamma1 on the diagonal and
    lam_m Fbar lam_m'^H off the diagonal, so t1 + t2 is the full Gram.
    """
    m, n_dim = gamma1.shape[0], gamma1.shape[1]
    mn = m * n_dim
    t1 = np.zeros((mn, mn), dtype=complex)
    for mi in range(m):
        sl = slice(mi * n_dim, (mi + 1) * n_dim)
        t1[sl, sl] = gamma1[mi]
    if not copilot:
        return t1, np.zeros((mn, mn), dtype=complex)
    t2 = np.empty((mn, mn), dtype=complex)
    for mi in range(m):
        for mj in range(m):
            blk = lam[mi] @ f_bar_l @ lam[mj].conj().T
            if mi == mj:
                blk = gamma2[mi] - gamma1[mi]
            t2[mi * n_dim:(mi + 1) * n_dim, mj * n_dim:(mj + 1) * n_dim] = blk
    return t1, t2


class ClosedFormStats:
    """Exact decode statistics of one drop under MR combining.

    Precomputes, once per drop, everything that does not depend on the
    data precoders: the estimate-Gram means ``z``, the co-pilot coupling
    means ``lam`` (stacked into E{G_ab}), and the block-trace tables
    ``bt[a, b, m][n, i, p, p'] = tr(R_mb^{ni} Rhat_ma^{p'p})``.  Grams,
    second moments and precoder-update cross terms for any precoder set
    are then cheap tensor contractions, which is what makes the
    statistics-based precoder iteration fast.
    """

    def __init__(self, pairs, est, plan, f_p):
        m, k = pairs.m, pairs.k
        n_dim = pairs.n_dim
        l_dim = pairs.l_dim
        self.m, self.k_total, self.n_dim, self.l_dim = m, k, n_dim, l_dim
        self.tau_p = plan.tau_p
        self.plan = plan
        self.sigma2 = est.sigma2
        mn = m * n_dim

        self.z = np.zeros((k, mn, n_dim), dtype=complex)
        self.s = np.zeros((k, m, n_dim, n_dim), dtype=complex)
        for ki in range(k):
            for mi in range(m):
                zmk = z_matrix(est.r_hat[mi, ki], n_dim)
                self.z[ki, mi * n_dim:(mi + 1) * n_dim] = zmk
                self.s[ki, mi] = zmk

        self.copilot = np.zeros((k, k), dtype=bool)
        for ki in range(k):
            self.copilot[ki, plan.copilots(ki)] = True

        # mean[a, b] = E{G_ab}; nonzero only for co-pilot pairs
        self.mean = np.zeros((k, k, mn, n_dim), dtype=complex)
        for a in range(k):
            self.mean[a, a] = self.z[a]
            for b in plan.copilots(a):
                if b == a:
                    continue
                for mi in range(m):
                    x = est_cross_cov(pairs, est, plan, f_p, mi, b, a)
                    self.mean[a, b, mi * n_dim:(mi + 1) * n_dim] = block_trace_matrix(
                        x, l_dim
                    )

        self.bt = np.zeros((k, k, m, n_dim, n_dim, n_dim, n_dim), dtype=complex)
        for a in range(k):
            for b in range(k):
                for mi in range(m):
                    self.bt[a, b, mi] = block_trace_table(
                        pairs.r_full[mi, b], est.r_hat[mi, a], l_dim
                    )

    # -- statistics ----------------------------------------------------

    def mean_g(self, a, b):
        """E{G_ab} (zero unless a and b share a pilot matrix)."""
        return self.mean[a, b]

    def gram(self, a, b, f_bar_b):
        """E{G_ab Fbar_b G_ab^H} exactly."""
        m, n_dim = self.m, self.n_dim
        mn = m * n_dim
        out = np.zeros((mn, mn), dtype=complex)
        g1 = np.einsum("ab,mabnq->mnq", f_bar_b, self.bt[a, b])
        for mi in range(m):
            sl = slice(mi * n_dim, (mi + 1) * n_dim)
            out[sl, sl] = g1[mi]
        if self.copilot[a, b]:
            mg = self.mean[a, b]
            out = out + mg @ f_bar_b @ mg.conj().T
        return herm(out)

    def decode_stats(self, f_u):
        """DecodeStats carrier with exact entries for the given precoders."""
        f_u = np.asarray(f_u, dtype=complex)
        f_bar = np.einsum("kab,kcb->kac", f_u, f_u.conj())
        k = self.k_total
        mn = self.m * self.n_dim
        gram = np.zeros((k, k, mn, mn), dtype=complex)
        for a in range(k):
            for b in range(k):
                gram[a, b] = self.gram(a, b, f_bar[b])
        return DecodeStats(
            z=self.z.copy(),
            gram=gram,
            s=self.s.copy(),
            source="closed-form",
            combiner=MR,
            f_bar=f_bar,
        )

    def second_moment(self, a, b):
        """Full tensor E{g_ab,n g_ab,i^H}, indexed [n, o, i, j]."""
        m, n_dim = self.m, self.n_dim
        mn = m * n_dim
        q = np.zeros((n_dim, mn, n_dim, mn), dtype=complex)
        if self.copilot[a, b]:
            mg = self.mean[a, b]
            q += np.einsum("on,ji->noij", mg, mg.conj())
        for mi in range(m):
            sl = slice(mi * n_dim, (mi + 1) * n_dim)
            # bt[n, i, p, p'] = tr(R_mb^{ni} Rhat_ma^{p'p})
            q[:, sl, :, sl] += self.bt[a, b, mi].transpose(0, 2, 1, 3)
        return q

    def gg_entry(self, a, b, m1, m2, n, i, p, p2):
        """Single entry [(m1,p), (m2,p2)] of E{g_ab,n g_ab,i^H}."""
        n_dim = self.n_dim
        o = m1 * n_dim + p
        j = m2 * n_dim + p2
        val = 0.0 + 0.0j
        if self.copilot[a, b]:
            val += self.mean[a, b][o, n] * np.conj(self.mean[a, b][j, i])
        if m1 == m2:
            val += self.bt[a, b, m1][n, i, p, p2]
        return val

    def weighted_gram(self, a, b, a_bar):
        """E{G_ab^H Abar G_ab} for a fixed MN x MN weight ``a_bar``."""
        m, n_dim = self.m, self.n_dim
        out = np.zeros((n_dim, n_dim), dtype=complex)
        for mi in range(m):
            sl = slice(mi * n_dim, (mi + 1) * n_dim)
            out += np.einsum("pq,inqp->ni", a_bar[sl, sl], self.bt[a, b, mi])
        if self.copilot[a, b]:
            mg = self.mean[a, b]
            out += mg.conj().T @ a_bar @ mg
        return out

    def cross_gram(self, f_u, a_bar, mu):
        """sum_l mu_l E{G_lk^H Abar_l G_lk} for every UE k.

        ``f_u`` is accepted for interface parity with the Monte-Carlo
        provider; MR statistics do not depend on it.
        """
        del f_u
        k = self.k_total
        out = np.zeros((k, self.n_dim, self.n_dim), dtype=complex)
        for ki in range(k):
            for li in range(k):
                out[ki] += mu[li] * self.weighted_gram(li, ki, a_bar[li])
        return out


def closed_se_lsfd(cf, f_u, sigma2, tau_p, tau_c, k, stats=None):
    """Closed-form SE, optimal LSFD weights, and optimal MSE matrix of UE k.

    ``stats`` may carry a precomputed ``cf.decode_stats(f_u)`` to avoid
    reassembling the Grams for every UE.
    """
    if stats is None:
        stats = cf.decode_stats(f_u)
    f_u = np.asarray(f_u, dtype=complex)
    a_opt = optimal_lsfd(stats, k, f_u[k], sigma2)
    se = se_optimal(stats, k, f_u[k], sigma2, tau_p, tau_c)
    e_opt = mse_matrix_opt(stats, k, a_opt, f_u[k])
    return se, a_opt, e_opt
