"""Shared fixtures: small seeded systems for oracle comparisons."""

from dataclasses import dataclass

import numpy as np
import pytest

from cfmimo import channel, closedform, scenario

# paper-style operating point: -94 dBm noise, 200 mW per UE
SIGMA2 = 10.0 ** ((-94.0 - 30.0) / 10.0)
POWER = 0.2
TAU_C = 200


@dataclass
class SmallSystem:
    drop: object
    pairs: object
    plan: object
    f_p: np.ndarray
    ops: object
    est: object
    cf: object
    m: int
    k: int
    l_dim: int
    n_dim: int
    tau_p: int
    sigma2: float
    power: float
    seed: int


def build_system(m, k, l_dim, n_dim, tau_p=None, seed=0, sigma2=SIGMA2, power=POWER):
    if tau_p is None:
        tau_p = n_dim * ((k + 1) // 2)
    drop = scenario.drop_network(m, k, 1000.0, seed=seed)
    pairs = scenario.generate_pairs(drop, l_dim, n_dim, seed=seed)
    plan = channel.assign_pilots(k, n_dim, tau_p)
    f_p = channel.default_precoders(k, n_dim, power)
    ops, est = channel.system_operators(pairs, plan, f_p, sigma2)
    cf = closedform.ClosedFormStats(pairs, est, plan, f_p)
    return SmallSystem(
        drop=drop, pairs=pairs, plan=plan, f_p=f_p, ops=ops, est=est, cf=cf,
        m=m, k=k, l_dim=l_dim, n_dim=n_dim, tau_p=tau_p,
        sigma2=sigma2, power=power, seed=seed,
    )


@pytest.fixture(scope="session")
def sys_copilot():
    """Two co-pilot UEs at two APs: exercises every pilot-sharing case."""
    return build_system(m=2, k=2, l_dim=2, n_dim=2, tau_p=2, seed=7)


@pytest.fixture(scope="session")
def sys_mixed():
    """Three UEs, two pilot groups ({0, 2} and {1}): mixed contamination."""
    return build_system(m=2, k=3, l_dim=2, n_dim=2, tau_p=4, seed=11)


def random_precoders(k, n_dim, power, rng):
    """Random full-rank precoders meeting the power budget with equality."""
    f = np.empty((k, n_dim, n_dim), dtype=complex)
    for i in range(k):
        g = rng.standard_normal((n_dim, n_dim)) + 1j * rng.standard_normal((n_dim, n_dim))
        f[i] = g * np.sqrt(power / np.trace(g @ g.conj().T).real)
    return f


def max_dev_in_se(value, mc_mean, mc_sumsq, n_r, floor_frac=1e-9):
    """Largest |closed - MC| in per-entry standard errors.

    Entries whose variability is negligible relative to the largest one
    are compared with an absolute floor instead (their SE estimate is
    itself pure noise).
    """
    from cfmimo.receive import standard_error

    se = standard_error(mc_mean, mc_sumsq, n_r)
    floor = floor_frac * max(np.abs(mc_mean).max(), 1e-300)
    return float((np.abs(value - mc_mean) / np.maximum(se, floor)).max())
