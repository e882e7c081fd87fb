"""Network drops, large-scale fading, and per-pair channel correlation.

A "drop" places access points (APs) and user equipments (UEs) uniformly in
a square service area with wrap-around distances.  Each AP-UE pair gets a
jointly-correlated Rayleigh fading description: receive/transmit
eigenbases coupled by a nonnegative power-coupling matrix whose entries
sum to L*N times the large-scale fading coefficient.

All randomness is drawn from named sub-streams of the drop seed so that
geometry, shadowing, coupling and channel realizations can be regenerated
independently and in any order.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import herm

# Named randomness sub-streams of a drop seed.
STREAM_GEOMETRY = 0
STREAM_SHADOWING = 1
STREAM_COUPLING = 2
STREAM_CHANNEL = 3
STREAM_PILOT_NOISE = 4

# Urban macro large-scale fading model: intercept/slope in dB, log-normal
# shadowing standard deviation in dB, and AP/UE height offset in meters
# (added in quadrature to the horizontal wrap-around distance).
PATHLOSS_INTERCEPT_DB = -30.5
PATHLOSS_SLOPE_DB = 36.7
SHADOWING_STD_DB = 4.0
HEIGHT_OFFSET_M = 10.0


def substream(seed, *key):
    """Independent Generator for the given named sub-stream of ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass
class NetworkDrop:
    """AP/UE positions (meters) in a wrap-around square area."""

    ap_positions: np.ndarray  # (M, 2)
    ue_positions: np.ndarray  # (K, 2)
    area_side: float

    @property
    def m(self):
        return self.ap_positions.shape[0]

    @property
    def k(self):
        return self.ue_positions.shape[0]


@dataclass
class PairCorrelation:
    """Second-order channel description of one AP-UE pair.

    ``u_r`` (L x L) and ``u_t`` (N x N) are the receive/transmit
    eigenbases, ``omega`` (L x N) the nonnegative eigenmode power-coupling
    matrix, and ``beta`` the large-scale fading coefficient
    sum(omega) / (L * N).
    """

    u_r: np.ndarray
    u_t: np.ndarray
    omega: np.ndarray
    beta: float

    @property
    def l_dim(self):
        return self.u_r.shape[0]

    @property
    def n_dim(self):
        return self.u_t.shape[0]


def drop_network(m, k, area_side, seed):
    """Drop ``m`` APs and ``k`` UEs i.i.d. uniformly over the square."""
    if m < 1 or k < 1:
        raise ValueError("need at least one AP and one UE")
    if area_side <= 0:
        raise ValueError("area_side must be positive")
    rng = substream(seed, STREAM_GEOMETRY)
    ap = rng.uniform(0.0, area_side, size=(m, 2))
    ue = rng.uniform(0.0, area_side, size=(k, 2))
    return NetworkDrop(ap_positions=ap, ue_positions=ue, area_side=area_side)


def pairwise_distance(drop, m, k):
    """Wrap-around AP-UE distance in meters, height offset included.

    The horizontal distance is the minimum over the nine shifted copies of
    the UE position (shifts of 0 or +-area_side per axis); the fixed
    height offset is added in quadrature.
    """
    ap = drop.ap_positions[m]
    ue = drop.ue_positions[k]
    side = drop.area_side
    best = np.inf
    for sx in (-side, 0.0, side):
        for sy in (-side, 0.0, side):
            dx = ap[0] - (ue[0] + sx)
            dy = ap[1] - (ue[1] + sy)
            best = min(best, dx * dx + dy * dy)
    return float(np.sqrt(best + HEIGHT_OFFSET_M**2))


def large_scale_fading(distance, shadow):
    """Linear channel gain at ``distance`` meters for a N(0,1) shadow draw."""
    if distance <= 0:
        raise ValueError("distance must be positive")
    beta_db = (
        PATHLOSS_INTERCEPT_DB
        - PATHLOSS_SLOPE_DB * np.log10(distance)
        + SHADOWING_STD_DB * shadow
    )
    return float(10.0 ** (beta_db / 10.0))


def _random_unitary(rng, dim):
    """Eigenvector matrix of a random complex Hermitian Gaussian matrix."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    _, v = np.linalg.eigh(herm(g))
    return v


def synthesize_coupling(l_dim, n_dim, beta, seed):
    """Random eigenbases plus a coupling matrix with one dominant column.

    Coupling entries are squared magnitudes of unit-variance complex
    Gaussians; one uniformly chosen transmit column is boosted by a factor
    2*L*N so that it carries the dominant share of the power, and the
    matrix is rescaled so that its entries sum to L*N*beta.
    """
    if l_dim < 1 or n_dim < 1:
        raise ValueError("antenna counts must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u_r = _random_unitary(rng, l_dim)
    u_t = _random_unitary(rng, n_dim)
    g = (rng.standard_normal((l_dim, n_dim)) + 1j * rng.standard_normal((l_dim, n_dim))) / np.sqrt(2.0)
    omega = np.abs(g) ** 2
    strong = int(rng.integers(n_dim))
    omega[:, strong] *= 2.0 * l_dim * n_dim
    omega *= (l_dim * n_dim * beta) / omega.sum()
    return PairCorrelation(u_r=u_r, u_t=u_t, omega=omega, beta=float(beta))


def eigen_kron(pc):
    """Joint eigenbasis conj(u_t) kron u_r of the full correlation matrix."""
    return np.kron(pc.u_t.conj(), pc.u_r)


def full_correlation(pc):
    """Full (L*N x L*N) correlation matrix of the vectorized channel."""
    q = eigen_kron(pc)
    w = pc.omega.reshape(-1, order="F")
    return herm((q * w) @ q.conj().T)


def sampling_factor(pc):
    """Factor B with vec(H) = B g for g ~ CN(0, I); B B^H is the correlation."""
    q = eigen_kron(pc)
    w = pc.omega.reshape(-1, order="F")
    return q * np.sqrt(w)


@dataclass
class PairSet:
    """Per-pair correlation data for a whole drop (arrays indexed [m, k])."""

    beta: np.ndarray      # (M, K)
    u_r: np.ndarray       # (M, K, L, L)
    u_t: np.ndarray       # (M, K, N, N)
    omega: np.ndarray     # (M, K, L, N)
    r_full: np.ndarray    # (M, K, LN, LN)
    factor: np.ndarray    # (M, K, LN, LN) sampling factors

    @property
    def m(self):
        return self.beta.shape[0]

    @property
    def k(self):
        return self.beta.shape[1]

    @property
    def l_dim(self):
        return self.u_r.shape[2]

    @property
    def n_dim(self):
        return self.u_t.shape[2]

    def pair(self, m, k):
        return PairCorrelation(
            u_r=self.u_r[m, k],
            u_t=self.u_t[m, k],
            omega=self.omega[m, k],
            beta=float(self.beta[m, k]),
        )


def generate_pairs(drop, l_dim, n_dim, seed):
    """Large-scale fading and coupling statistics for every AP-UE pair.

    Shadowing is i.i.d. across pairs and drawn from its own sub-stream;
    each pair's coupling comes from a sub-stream keyed by (m, k), so pairs
    can be generated concurrently or individually with identical results.
    """
    m, k = drop.m, drop.k
    ln = l_dim * n_dim
    shadow = substream(seed, STREAM_SHADOWING).standard_normal((m, k))
    out = PairSet(
        beta=np.zeros((m, k)),
        u_r=np.zeros((m, k, l_dim, l_dim), dtype=complex),
        u_t=np.zeros((m, k, n_dim, n_dim), dtype=complex),
        omega=np.zeros((m, k, l_dim, n_dim)),
        r_full=np.zeros((m, k, ln, ln), dtype=complex),
        factor=np.zeros((m, k, ln, ln), dtype=complex),
    )
    for mi in range(m):
        for ki in range(k):
            dist = pairwise_distance(drop, mi, ki)
            beta = large_scale_fading(dist, shadow[mi, ki])
            pc = synthesize_coupling(
                l_dim, n_dim, beta, substream(seed, STREAM_COUPLING, mi, ki)
            )
            out.beta[mi, ki] = beta
            out.u_r[mi, ki] = pc.u_r
            out.u_t[mi, ki] = pc.u_t
            out.omega[mi, ki] = pc.omega
            out.r_full[mi, ki] = full_correlation(pc)
            out.factor[mi, ki] = sampling_factor(pc)
    return out
