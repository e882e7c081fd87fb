"""Two-layer uplink decoding: local combining, LSFD fusion, MSE and SE.

The first layer applies a per-AP combiner (maximum-ratio or local MMSE) to
the received data signal; the second layer linearly fuses the per-AP soft
estimates with statistics-based weight matrices.  All spectral-efficiency
evaluation goes through the decode statistics

    z[k]       = E{G_kk}                 (MN x N)
    gram[k,l]  = E{G_kl Fbar_l G_kl^H}   (MN x MN)
    s[k]       = blocks E{V_mk^H V_mk}   (M, N, N)

where G_kl stacks V_mk^H H_ml over APs.  The statistics can come from the
Monte-Carlo kernels (any combiner) or from the closed-form module (MR).
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numerics import as_blocks, herm, logdet_pd, solve_hpd

MR = "mr"
LMMSE = "lmmse"


@dataclass
class DecodeStats:
    """Decode statistics for every UE (and UE pair) of one drop.

    ``second``, when present, holds the full column-wise second moments
    E{g_kl,n g_kl,i^H} indexed [k, l, n, o, i, j]; ``gram`` is its
    contraction with the data precoder Grams recorded in ``f_bar``.  The
    ``*_sq`` fields are running sums of squared magnitudes of the
    per-realization terms (Monte-Carlo source only), kept for
    standard-error estimates.
    """

    z: np.ndarray                 # (K, MN, N)
    gram: np.ndarray              # (K, K, MN, MN)
    s: np.ndarray                 # (K, M, N, N)
    source: str                   # "monte-carlo" | "closed-form"
    combiner: str                 # "mr" | "lmmse"
    f_bar: np.ndarray             # (K, N, N) precoder Grams used for ``gram``
    n_r: int | None = None
    second: np.ndarray | None = None       # (K, K, N, MN, N, MN)
    z_sq: np.ndarray | None = None
    gram_sq: np.ndarray | None = None
    second_sq: np.ndarray | None = None

    @property
    def k(self):
        return self.z.shape[0]

    @property
    def n_dim(self):
        return self.z.shape[2]

    @property
    def m(self):
        return self.s.shape[1]

    def s_full(self, k):
        """Block-diagonal MN x MN combiner Gram S_k."""
        m, n = self.m, self.n_dim
        out = np.zeros((m * n, m * n), dtype=complex)
        for mi in range(m):
            out[mi * n:(mi + 1) * n, mi * n:(mi + 1) * n] = self.s[k, mi]
        return out

    def gram_sum(self, k):
        """sum_l E{G_kl Fbar_l G_kl^H}."""
        return self.gram[k].sum(axis=0)


def contract_gram(second_kl, f_bar_l):
    """E{G Fbar G^H} from the stored second-moment tensor."""
    return np.einsum("ni,noij->oj", f_bar_l, second_kl)


def contract_cross(second_lk, a_bar_l):
    """E{G^H Abar G} from the stored second-moment tensor of G_lk."""
    return np.einsum("oj,ijno->ni", a_bar_l, second_lk)


def standard_error(mean, sumsq, n_r):
    """Entrywise standard error of a Monte-Carlo mean.

    ``sumsq`` is the running sum of squared magnitudes of the
    per-realization terms whose average is ``mean``.
    """
    var = np.maximum(sumsq / n_r - np.abs(mean) ** 2, 0.0)
    return np.sqrt(var / n_r)


# ---------------------------------------------------------------------------
# first-layer combiners (single-instance forms, used by tests and docs;
# the Monte-Carlo kernels inline the same math)
# ---------------------------------------------------------------------------

def mr_combiner(h_hat):
    """Maximum-ratio combiner: the channel estimate itself."""
    return h_hat


def cprime(c_mat, f_bar):
    """Precoded estimation-error covariance E{Htilde Fbar Htilde^H}.

    ``c_mat`` is the (LN x LN) error covariance; the (j, q) entry of the
    result contracts its L x L blocks with the precoder Gram.
    """
    n_dim = f_bar.shape[0]
    l_dim = c_mat.shape[0] // n_dim
    return herm(np.einsum("ab,abjq->jq", f_bar, as_blocks(c_mat, l_dim)))


def lmmse_combiner(h_hat_all, cprime_all, f_u, sigma2, k):
    """Local MMSE combiner for UE k at one AP.

    Parameters
    ----------
    h_hat_all : (K, L, N) channel estimates at this AP
    cprime_all : (K, L, L) precoded error covariances at this AP
    f_u : (K, N, N) data precoders
    sigma2 : noise power
    k : served UE index
    """
    k_total, l_dim, _ = h_hat_all.shape
    a = sigma2 * np.eye(l_dim, dtype=complex)
    for li in range(k_total):
        f_bar = f_u[li] @ f_u[li].conj().T
        a = a + h_hat_all[li] @ f_bar @ h_hat_all[li].conj().T + cprime_all[li]
    return np.linalg.solve(a, h_hat_all[k] @ f_u[k])


def cprime_sum(est, f_bar):
    """Constant part of the L-MMSE combining matrix per AP:
    sum_l C'_ml + sigma^2 I."""
    m = est.c.shape[0]
    k = est.c.shape[1]
    n_dim = f_bar.shape[1]
    l_dim = est.c.shape[2] // n_dim
    out = np.broadcast_to(
        est.sigma2 * np.eye(l_dim, dtype=complex), (m, l_dim, l_dim)
    ).copy()
    for mi in range(m):
        for li in range(k):
            out[mi] += cprime(est.c[mi, li], f_bar[li])
    return out


# ---------------------------------------------------------------------------
# Monte-Carlo decode statistics
# ---------------------------------------------------------------------------

def mc_decode_stats(ops, est, f_u, combiner, n_r, seed, *,
                    want_second=False, want_sq=False, backend=None):
    """Estimate decode statistics from ``n_r`` channel/noise realizations.

    Channel estimates are re-drawn jointly with the channels (fresh pilot
    noise per realization).  Results are deterministic given the seed:
    realizations come from named per-pair substreams and are accumulated
    in realization order.
    """
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    f_u = np.asarray(f_u, dtype=complex)
    f_bar = np.einsum("kab,kcb->kac", f_u, f_u.conj())
    cps = (
        cprime_sum(est, f_bar)
        if combiner == LMMSE
        else np.zeros((ops.m, ops.l_dim, ops.l_dim), dtype=complex)
    )
    acc = kernels.decode_pass(
        ops, f_u, f_bar, combiner, cps, n_r, seed,
        want_second=want_second, want_sq=want_sq, backend=backend,
    )
    second = acc["second"] / n_r if want_second else None
    if want_second:
        gram = np.stack([
            np.stack([contract_gram(second[k, l], f_bar[l]) for l in range(ops.k)])
            for k in range(ops.k)
        ])
    else:
        gram = acc["gram"] / n_r
    return DecodeStats(
        z=acc["z"] / n_r,
        gram=gram,
        s=acc["s"] / n_r,
        source="monte-carlo",
        combiner=combiner,
        f_bar=f_bar,
        n_r=n_r,
        second=second,
        z_sq=acc["z_sq"] if want_sq else None,
        gram_sq=acc["gram_sq"] if (want_sq and not want_second) else None,
        second_sq=acc["second_sq"] if (want_sq and want_second) else None,
    )


def mc_weighted_grams(ops, est, f_u, a_bar, combiner, n_r, seed, *,
                      want_sq=False, backend=None):
    """Monte-Carlo estimates of E{G_lk^H Abar_l G_lk}, indexed [k, l].

    Uses the same named realization streams as :func:`mc_decode_stats`, so
    with equal seeds the two passes see identical channels (common random
    numbers across the statistics and precoder-update passes).
    """
    f_u = np.asarray(f_u, dtype=complex)
    f_bar = np.einsum("kab,kcb->kac", f_u, f_u.conj())
    cps = (
        cprime_sum(est, f_bar)
        if combiner == LMMSE
        else np.zeros((ops.m, ops.l_dim, ops.l_dim), dtype=complex)
    )
    cross, cross_sq = kernels.cross_pass(
        ops, f_u, f_bar, combiner, cps, a_bar, n_r, seed,
        want_sq=want_sq, backend=backend,
    )
    return cross / n_r, cross_sq


def mc_cross_gram(ops, est, f_u, a_bar, mu, combiner, n_r, seed, *, backend=None):
    """Monte-Carlo estimate of sum_l mu_l E{G_lk^H Abar_l G_lk} per UE."""
    pairs, _ = mc_weighted_grams(ops, est, f_u, a_bar, combiner, n_r, seed,
                                 backend=backend)
    return np.einsum("l,klni->kni", np.asarray(mu, dtype=float), pairs)


# ---------------------------------------------------------------------------
# LSFD fusion, MSE matrices, spectral efficiency
# ---------------------------------------------------------------------------

def optimal_lsfd(stats, k, f_u_k, sigma2):
    """SE-maximizing (and conditional-MSE-minimizing) LSFD weights for UE k."""
    total = herm(stats.gram_sum(k)) + sigma2 * stats.s_full(k)
    return solve_hpd(total, stats.z[k] @ f_u_k)


def mse_matrix(stats, k, a, f_u_k, sigma2):
    """Conditional MSE matrix of UE k for arbitrary LSFD weights ``a``."""
    zf = stats.z[k] @ f_u_k
    total = herm(stats.gram_sum(k)) + sigma2 * stats.s_full(k)
    n = stats.n_dim
    return herm(
        np.eye(n, dtype=complex)
        - zf.conj().T @ a
        - a.conj().T @ zf
        + a.conj().T @ total @ a
    )


def mse_matrix_opt(stats, k, a_opt, f_u_k):
    """Conditional MSE matrix at the optimal LSFD weights (short form)."""
    n = stats.n_dim
    return herm(np.eye(n, dtype=complex) - f_u_k.conj().T @ stats.z[k].conj().T @ a_opt)


def uatf_se(stats, k, a, f_u_k, sigma2, tau_p, tau_c):
    """Ergodic achievable SE (bit/s/Hz) of UE k for LSFD weights ``a``.

    Hardening-style bound: only the mean of the effective channel carries
    signal; everything else (estimate fluctuation, interference, noise) is
    treated as uncorrelated effective noise.
    """
    if tau_p > tau_c:
        raise ValueError("tau_p must not exceed tau_c")
    if tau_p == tau_c:
        return 0.0
    d = a.conj().T @ stats.z[k] @ f_u_k
    if not np.any(d):
        return 0.0
    cov = (
        a.conj().T @ herm(stats.gram_sum(k)) @ a
        - d @ d.conj().T
        + sigma2 * a.conj().T @ stats.s_full(k) @ a
    )
    cov = herm(cov)
    n = stats.n_dim
    inner = np.eye(n, dtype=complex) + herm(d.conj().T @ solve_hpd(cov, d))
    pre = 1.0 - tau_p / tau_c
    return max(float(pre * logdet_pd(inner)), 0.0)


def se_optimal(stats, k, f_u_k, sigma2, tau_p, tau_c):
    """Maximal UatF SE of UE k (optimal LSFD weights substituted)."""
    if tau_p > tau_c:
        raise ValueError("tau_p must not exceed tau_c")
    if tau_p == tau_c:
        return 0.0
    zf = stats.z[k] @ f_u_k
    if not np.any(zf):
        return 0.0
    denom = (
        herm(stats.gram_sum(k))
        - zf @ zf.conj().T
        + sigma2 * stats.s_full(k)
    )
    n = stats.n_dim
    inner = np.eye(n, dtype=complex) + herm(zf.conj().T @ solve_hpd(denom, zf))
    pre = 1.0 - tau_p / tau_c
    return max(float(pre * logdet_pd(inner)), 0.0)
