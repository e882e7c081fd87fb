"""Pilot assignment, channel realization sampling, and MMSE estimation.

UEs transmit N x N pilot matrices built from mutually orthogonal
sequences; tau_p / N such matrices exist, so UEs sharing a matrix (the
co-pilot set of each UE) contaminate each other's estimates.  The AP
projects its pilot observation onto the pilot matrix, which in vectorized
form reads

    y_mk = sum_{l in P_k} tau_p Ftilde_l h_ml + q_m,   q_m ~ CN(0, tau_p sigma^2 I)

with Ftilde_l = F_l^T kron I_L, and the MMSE estimate of h_mk is
R_mk Ftilde_k^H Psi_mk^{-1} y_mk.  The projected noise covariance
tau_p sigma^2 I follows from the orthogonality of the pilot matrix, so the
simulator draws q directly instead of simulating the tau_p-length block.
"""

from dataclasses import dataclass

import numpy as np

from . import scenario
from .numerics import herm, solve_hpd


@dataclass
class PilotPlan:
    """Round-robin assignment of UEs to orthogonal pilot matrices."""

    tau_p: int
    group_of: np.ndarray        # (K,) pilot-matrix index per UE
    groups: list                # list of int arrays, UE indices per matrix

    @property
    def n_groups(self):
        return len(self.groups)

    def copilots(self, k):
        """Index set of UEs sharing UE k's pilot matrix (k included)."""
        return self.groups[self.group_of[k]]


def assign_pilots(k_total, n_dim, tau_p):
    """Assign pilot matrices round-robin: UE k uses matrix k mod (tau_p/N)."""
    if tau_p % n_dim:
        raise ValueError(f"tau_p={tau_p} must be a multiple of N={n_dim}")
    n_mat = tau_p // n_dim
    if n_mat < 1:
        raise ValueError("tau_p must allow at least one pilot matrix")
    group_of = np.arange(k_total) % n_mat
    groups = [np.flatnonzero(group_of == g) for g in range(n_mat)]
    return PilotPlan(tau_p=int(tau_p), group_of=group_of, groups=groups)


def default_precoders(k_total, n_dim, powers):
    """Scaled-identity precoders sqrt(p_k / N) I_N, one per UE."""
    powers = np.broadcast_to(np.asarray(powers, dtype=float), (k_total,))
    eye = np.eye(n_dim, dtype=complex)
    return np.stack([np.sqrt(p / n_dim) * eye for p in powers])


def f_tilde(f, l_dim):
    """Lift an N x N precoder to act on vectorized channels: F^T kron I_L."""
    return np.kron(f.T, np.eye(l_dim, dtype=complex))


def sample_channel(pc, seed):
    """One L x N channel realization for a pair description.

    H = U_r (sqrt(Omega) . G) U_t^H with G i.i.d. CN(0, 1); vec(H) then has
    the pair's full correlation matrix as covariance.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    l_dim, n_dim = pc.l_dim, pc.n_dim
    g = (rng.standard_normal((l_dim, n_dim)) + 1j * rng.standard_normal((l_dim, n_dim))) / np.sqrt(2.0)
    return pc.u_r @ (np.sqrt(pc.omega) * g) @ pc.u_t.conj().T


@dataclass
class EstimationStatistics:
    """Pilot-phase second-order statistics for every AP-UE pair.

    ``psi`` is indexed by pilot group (it is shared by co-pilot UEs),
    ``r_hat``/``c`` are the estimate/error covariances with
    r_hat + c = R exactly, and ``w_est`` is the LMMSE estimator matrix
    applied to the projected pilot observation.
    """

    psi: np.ndarray      # (M, G, LN, LN)
    r_hat: np.ndarray    # (M, K, LN, LN)
    c: np.ndarray        # (M, K, LN, LN)
    w_est: np.ndarray    # (M, K, LN, LN)
    tau_p: int
    sigma2: float


def pilot_statistics(pairs, plan, f_p, sigma2):
    """Gram, estimate-covariance and error-covariance matrices.

    Parameters
    ----------
    pairs : scenario.PairSet
    plan : PilotPlan
    f_p : (K, N, N) complex ndarray
        Pilot precoders (power: trace(F F^H) <= p_k).
    sigma2 : float
        Noise power per receive antenna.
    """
    m, k = pairs.m, pairs.k
    l_dim, n_dim = pairs.l_dim, pairs.n_dim
    ln = l_dim * n_dim
    tau_p = plan.tau_p
    ft = np.stack([f_tilde(f_p[j], l_dim) for j in range(k)])

    psi = np.zeros((m, plan.n_groups, ln, ln), dtype=complex)
    r_hat = np.zeros((m, k, ln, ln), dtype=complex)
    c = np.zeros((m, k, ln, ln), dtype=complex)
    w_est = np.zeros((m, k, ln, ln), dtype=complex)

    for mi in range(m):
        for g, members in enumerate(plan.groups):
            acc = sigma2 * np.eye(ln, dtype=complex)
            for l in members:
                acc = acc + tau_p * ft[l] @ pairs.r_full[mi, l] @ ft[l].conj().T
            psi[mi, g] = herm(acc)
        for ki in range(k):
            g = plan.group_of[ki]
            r = pairs.r_full[mi, ki]
            # W = R Ftilde^H Psi^{-1}, computed as a Hermitian solve.
            w = solve_hpd(psi[mi, g], ft[ki] @ r).conj().T
            w_est[mi, ki] = w
            r_hat[mi, ki] = herm(tau_p * w @ ft[ki] @ r)
            c[mi, ki] = r - r_hat[mi, ki]
    return EstimationStatistics(
        psi=psi, r_hat=r_hat, c=c, w_est=w_est, tau_p=tau_p, sigma2=float(sigma2)
    )


@dataclass
class ChannelRealization:
    """True channel, MMSE estimate, and estimation error (h = h_hat + h_tilde)."""

    h: np.ndarray        # (L, N)
    h_hat: np.ndarray    # (L, N)
    h_tilde: np.ndarray  # (L, N)


def mmse_estimate(h_all, est, plan, f_p, m, k, noise_seed):
    """MMSE-estimate the channel of UE k at AP m from co-pilot channels.

    ``h_all`` maps UE index -> true L x N channel at AP m for every UE in
    the co-pilot set of k.  Fresh projected pilot noise is drawn from
    ``noise_seed``.
    """
    rng = (
        noise_seed
        if isinstance(noise_seed, np.random.Generator)
        else np.random.default_rng(noise_seed)
    )
    l_dim = h_all[k].shape[0]
    ln = est.w_est.shape[-1]
    tau_p = est.tau_p
    y = np.zeros(ln, dtype=complex)
    for l in plan.copilots(k):
        y = y + tau_p * (f_tilde(f_p[l], l_dim) @ h_all[l].reshape(-1, order="F"))
    q = (rng.standard_normal(ln) + 1j * rng.standard_normal(ln)) * np.sqrt(tau_p * est.sigma2 / 2.0)
    y = y + q
    h_hat = (est.w_est[m, k] @ y).reshape(l_dim, -1, order="F")
    h = h_all[k]
    return ChannelRealization(h=h, h_hat=h_hat, h_tilde=h - h_hat)


@dataclass
class SystemOperators:
    """Per-drop operators consumed by the Monte-Carlo kernels.

    Bundles the sampling factors, pilot propagation matrices
    tau_p * Ftilde_l, the estimator matrices, and the group layout in a
    kernel-friendly (contiguous array) form.
    """

    factor: np.ndarray        # (M, K, LN, LN) channel sampling factors
    w_est: np.ndarray         # (M, K, LN, LN) estimator matrices
    pilot_prop: np.ndarray    # (K, LN, LN) tau_p * Ftilde_l
    group_of: np.ndarray      # (K,)
    n_groups: int
    noise_std: float          # per-component std of projected pilot noise
    sigma2: float
    tau_p: int
    l_dim: int
    n_dim: int

    @property
    def m(self):
        return self.factor.shape[0]

    @property
    def k(self):
        return self.factor.shape[1]


def system_operators(pairs, plan, f_p, sigma2):
    """Precompute the per-drop matrices used by the realization kernels."""
    est = pilot_statistics(pairs, plan, f_p, sigma2)
    k = pairs.k
    l_dim = pairs.l_dim
    prop = np.stack([plan.tau_p * f_tilde(f_p[j], l_dim) for j in range(k)])
    return SystemOperators(
        factor=np.ascontiguousarray(pairs.factor),
        w_est=np.ascontiguousarray(est.w_est),
        pilot_prop=np.ascontiguousarray(prop),
        group_of=plan.group_of.astype(np.int64),
        n_groups=plan.n_groups,
        noise_std=float(np.sqrt(plan.tau_p * sigma2 / 2.0)),
        sigma2=float(sigma2),
        tau_p=int(plan.tau_p),
        l_dim=int(l_dim),
        n_dim=int(pairs.n_dim),
    ), est
