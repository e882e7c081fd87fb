"""Iteratively weighted-MMSE optimization of the uplink data precoders.

Block-coordinate maximization of the weighted sum SE using only channel
statistics: per iteration the decode statistics are refreshed under the
current precoders, the LSFD weights and MSE matrices take their optimal
statistics-based forms, the MSE weights are set to the inverse MSE
matrices, and each precoder is updated through the regularized
least-squares structure

    F_k(lambda) = mu_k (sum_l mu_l E{G_lk^H A_l E_l^{-1} A_l^H G_lk}
                        + lambda I)^{-1} E{G_kk}^H A_k E_k^{-1}

with the multiplier found by bisection so that trace(F F^H) meets the
per-UE power budget (complementary slackness).  On deterministic (closed
form) statistics the weighted sum SE is non-decreasing across iterations.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import receive
from .numerics import herm, solve_hpd

log = logging.getLogger(__name__)

BISECTION_MAX_DOUBLINGS = 60
BISECTION_MAX_STEPS = 400
POWER_REL_TOL = 1e-8
SLACKNESS_TOL = 1e-6


@dataclass
class WeightedProblem:
    """Per-UE priority weights and transmit power budgets (watts)."""

    mu: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if np.any(self.mu <= 0) or np.any(self.p <= 0):
            raise ValueError("weights and power budgets must be positive")


@dataclass
class IterationRecord:
    iteration: int
    wsr: float
    se: np.ndarray        # (K,)
    lam: np.ndarray       # (K,)
    f_trace: np.ndarray   # (K,) trace(F_k F_k^H)


@dataclass
class OptimizerState:
    f_u: np.ndarray                   # (K, N, N)
    a: np.ndarray                     # (K, MN, N)
    w: np.ndarray                     # (K, N, N)
    e: np.ndarray                     # (K, N, N)
    wsr_trace: list = field(default_factory=list)
    records: list = field(default_factory=list)
    iteration: int = 0
    converged: bool = False


def update_weight(e):
    """MSE weight W = E^{-1} (first-order optimum for the weighted MSE)."""
    return herm(solve_hpd(e, np.eye(e.shape[0], dtype=complex)))


def precoder_update(cross_gram, z_k, a_k, e_k, mu_k, lam):
    """Evaluate the precoder structure F_k(lambda).

    ``cross_gram`` is sum_l mu_l E{G_lk^H A_l E_l^{-1} A_l^H G_lk}; the
    system is singular at lambda = 0 only when that matrix is rank
    deficient, in which case the caller must bisect with lambda > 0.
    """
    n = cross_gram.shape[0]
    rhs = z_k.conj().T @ a_k
    rhs = solve_hpd(e_k, rhs.conj().T).conj().T      # rhs @ E^{-1}
    return mu_k * np.linalg.solve(herm(cross_gram) + lam * np.eye(n), rhs)


def bisect_lambda(p_k, f_of_lambda, trace_scale):
    """Smallest multiplier meeting the power budget, with its precoder.

    Returns (0, F(0)) when the unconstrained optimum is feasible;
    otherwise brackets by doubling from ``trace_scale`` and bisects until
    trace(F F^H) matches the budget to POWER_REL_TOL and the slackness
    product lambda * (trace - p) is below SLACKNESS_TOL.
    """
    def power(f):
        return float(np.real(np.vdot(f, f)))

    try:
        f0 = f_of_lambda(0.0)
        t0 = power(f0)
    except np.linalg.LinAlgError:
        f0, t0 = None, np.inf
    if t0 <= p_k * (1.0 + POWER_REL_TOL):
        return 0.0, f0

    lo = 0.0
    hi = max(trace_scale, 1e-300)
    for _ in range(BISECTION_MAX_DOUBLINGS):
        if power(f_of_lambda(hi)) <= p_k:
            break
        lo = hi
        hi *= 2.0
    else:
        raise RuntimeError(
            "power constraint bracket not found; decode statistics are pathological"
        )
    lam, f = hi, f_of_lambda(hi)
    for _ in range(BISECTION_MAX_STEPS):
        mid = 0.5 * (lo + hi)
        f_mid = f_of_lambda(mid)
        t_mid = power(f_mid)
        if t_mid > p_k:
            lo = mid
        else:
            hi, lam, f = mid, mid, f_mid
        gap = abs(power(f) - p_k)
        if gap <= POWER_REL_TOL * p_k and lam * gap <= SLACKNESS_TOL:
            break
    return lam, f


def initial_precoders(k_total, n_dim, p):
    """Scaled identities sqrt(p_k / N) I_N (also the no-precoding baseline)."""
    p = np.broadcast_to(np.asarray(p, dtype=float), (k_total,))
    eye = np.eye(n_dim, dtype=complex)
    return np.stack([np.sqrt(pk / n_dim) * eye for pk in p])


def weighted_sum_se(stats, f_u, mu, sigma2, tau_p, tau_c):
    """Per-UE optimal-LSFD SE and the weighted sum, for given precoders."""
    se = np.array([
        receive.se_optimal(stats, k, f_u[k], sigma2, tau_p, tau_c)
        for k in range(stats.k)
    ])
    return se, float(np.dot(mu, se))


def iwmmse_run(problem, provider, sigma2, tau_p, tau_c, *,
               i_max=20, epsilon=5e-4, f_init=None):
    """Run the iterative precoder optimization until convergence.

    ``provider`` supplies decode statistics for the current precoders
    (``decode_stats(f_u)``) and the precoder-update cross Grams
    (``cross_gram(f_u, a_bar, mu)``); statistics can be exact (MR closed
    form) or Monte-Carlo with common random numbers across iterations.
    """
    if i_max < 1:
        raise ValueError("i_max must be >= 1")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    mu, p = problem.mu, problem.p
    stats = provider.decode_stats(f_init) if f_init is not None else None
    if stats is None:
        raise ValueError("f_init is required (use initial_precoders)")
    k_total, n_dim = stats.k, stats.n_dim
    f_u = np.array(f_init, dtype=complex)

    state = OptimizerState(
        f_u=f_u,
        a=np.zeros((k_total, stats.z.shape[1], n_dim), dtype=complex),
        w=np.stack([np.eye(n_dim, dtype=complex)] * k_total),
        e=np.stack([np.eye(n_dim, dtype=complex)] * k_total),
    )
    live = [k for k in range(k_total) if np.linalg.norm(stats.z[k]) > 0]
    if len(live) < k_total:
        log.warning("UEs with all-zero statistics excluded from optimization: %s",
                    sorted(set(range(k_total)) - set(live)))

    se, wsr = weighted_sum_se(stats, f_u, mu, sigma2, tau_p, tau_c)
    state.wsr_trace.append(wsr)
    state.records.append(IterationRecord(
        iteration=0, wsr=wsr, se=se, lam=np.zeros(k_total),
        f_trace=np.real(np.einsum("kab,kab->k", f_u, f_u.conj())),
    ))

    for it in range(1, i_max + 1):
        a_bar = np.zeros((k_total, stats.z.shape[1], stats.z.shape[1]), dtype=complex)
        for k in live:
            state.a[k] = receive.optimal_lsfd(stats, k, f_u[k], sigma2)
            state.e[k] = receive.mse_matrix_opt(stats, k, state.a[k], f_u[k])
            state.w[k] = update_weight(state.e[k])
            a_bar[k] = herm(state.a[k] @ solve_hpd(state.e[k], state.a[k].conj().T))
        cross = provider.cross_gram(f_u, a_bar, mu)

        lam = np.zeros(k_total)
        f_new = f_u.copy()
        for k in live:
            def f_of_lambda(l, _k=k):
                return precoder_update(cross[_k], stats.z[_k], state.a[_k],
                                       state.e[_k], mu[_k], l)
            scale = max(np.real(np.trace(cross[k])) / n_dim, 1e-300)
            lam[k], f_new[k] = bisect_lambda(p[k], f_of_lambda, scale)
        f_u = f_new
        state.f_u = f_u
        state.iteration = it

        stats = provider.decode_stats(f_u)
        se, wsr = weighted_sum_se(stats, f_u, mu, sigma2, tau_p, tau_c)
        state.wsr_trace.append(wsr)
        state.records.append(IterationRecord(
            iteration=it, wsr=wsr, se=se, lam=lam,
            f_trace=np.real(np.einsum("kab,kab->k", f_u, f_u.conj())),
        ))
        prev = state.wsr_trace[-2]
        if abs(wsr - prev) / max(prev, 1e-300) <= epsilon:
            state.converged = True
            break
    return state


# ---------------------------------------------------------------------------
# statistics providers
# ---------------------------------------------------------------------------

class MonteCarloProvider:
    """Decode-statistics provider backed by the realization kernels.

    The same drop seed is reused for every pass (common random numbers),
    so iterating the optimizer does not inject fresh sampling noise.  With
    MR combining the combiner does not depend on the precoders, so the
    full second-moment tensor is estimated once and every later request is
    a contraction; with L-MMSE combining each request reruns the kernels
    under the current precoders.
    """

    def __init__(self, ops, est, combiner, n_r, seed, backend=None):
        self.ops = ops
        self.est = est
        self.combiner = combiner
        self.n_r = int(n_r)
        self.seed = seed
        self.backend = backend
        self._mr_stats = None

    def _mr_base(self):
        if self._mr_stats is None:
            f_ref = initial_precoders(self.ops.k, self.ops.n_dim, 1.0)
            self._mr_stats = receive.mc_decode_stats(
                self.ops, self.est, f_ref, receive.MR, self.n_r, self.seed,
                want_second=True, backend=self.backend,
            )
        return self._mr_stats

    def decode_stats(self, f_u):
        f_u = np.asarray(f_u, dtype=complex)
        if self.combiner == receive.MR:
            base = self._mr_base()
            f_bar = np.einsum("kab,kcb->kac", f_u, f_u.conj())
            k = base.k
            gram = np.stack([
                np.stack([receive.contract_gram(base.second[a, b], f_bar[b])
                          for b in range(k)])
                for a in range(k)
            ])
            return receive.DecodeStats(
                z=base.z, gram=gram, s=base.s, source=base.source,
                combiner=base.combiner, f_bar=f_bar, n_r=base.n_r,
                second=base.second,
            )
        return receive.mc_decode_stats(
            self.ops, self.est, f_u, self.combiner, self.n_r, self.seed,
            backend=self.backend,
        )

    def cross_gram(self, f_u, a_bar, mu):
        if self.combiner == receive.MR:
            base = self._mr_base()
            k = base.k
            out = np.zeros((k, base.n_dim, base.n_dim), dtype=complex)
            for ki in range(k):
                for li in range(k):
                    out[ki] += mu[li] * receive.contract_cross(
                        base.second[li, ki], a_bar[li]
                    )
            return out
        return receive.mc_cross_gram(
            self.ops, self.est, f_u, a_bar, mu, self.combiner, self.n_r,
            self.seed, backend=self.backend,
        )
