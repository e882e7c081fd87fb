"""Monte-Carlo realization kernels (numba-jitted with a numpy twin).

Each realization draws fresh channels and pilot noise, runs MMSE
estimation, applies the first-layer combiner, and accumulates the decode
statistics:

* ``z``      -- running sum of G_kk = stack_m(V_mk^H H_mk),
* ``s``      -- running sum of per-AP combiner Grams V_mk^H V_mk,
* ``gram``   -- running sum of G_kl Fbar_l G_kl^H (contracted mode), or
* ``second`` -- running sum of the full column second moments
                g_kl,n g_kl,i^H (tensor mode), and
* ``cross``  -- running sum of sum_l mu_l G_lk^H Abar_l G_lk
                (precoder-update pass).

Random numbers are drawn outside the kernels from named per-pair streams,
so both backends consume identical realizations, any pass over the same
seed sees the same channel/noise sequence (common random numbers), and
the chunk size does not change the streams.  Accumulation happens in
realization order within a chunk and chunk-by-chunk, so results are
bit-stable for a fixed seed and chunk size.
"""

import numpy as np

from . import scenario
from .backend import HAVE_NUMBA, resolve

# Fixed chunk length for the realization loop.  This is a performance
# knob only as far as the random streams are concerned, but changing it
# perturbs floating-point accumulation order, so it stays constant.
CHUNK_SIZE = 512

_SQRT_HALF = np.sqrt(0.5)


def _pair_rngs(seed, m, k):
    return [
        [scenario.substream(seed, scenario.STREAM_CHANNEL, mi, ki) for ki in range(k)]
        for mi in range(m)
    ]


def _noise_rngs(seed, m, n_groups):
    return [
        [scenario.substream(seed, scenario.STREAM_PILOT_NOISE, mi, gi) for gi in range(n_groups)]
        for mi in range(m)
    ]


def _draw_chunk(ops, pair_rngs, noise_rngs, c):
    """Complex channel innovations and pre-scaled pilot noise for a chunk."""
    m, k = ops.m, ops.k
    ln = ops.l_dim * ops.n_dim
    g = np.empty((c, m, k, ln), dtype=complex)
    for mi in range(m):
        for ki in range(k):
            a = pair_rngs[mi][ki].standard_normal((c, ln, 2))
            g[:, mi, ki] = (a[..., 0] + 1j * a[..., 1]) * _SQRT_HALF
    q = np.empty((c, m, ops.n_groups, ln), dtype=complex)
    for mi in range(m):
        for gi in range(ops.n_groups):
            a = noise_rngs[mi][gi].standard_normal((c, ln, 2))
            q[:, mi, gi] = (a[..., 0] + 1j * a[..., 1]) * ops.noise_std
    return g, q


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

def _realize_numpy(ops, f_bar, f_u, cps, lmmse, g, q):
    """True channels and combiners for a chunk, in L x N matrix form."""
    c = g.shape[0]
    m, k = ops.m, ops.k
    l_dim, n_dim = ops.l_dim, ops.n_dim
    h = np.einsum("mkab,rmkb->rmka", ops.factor, g)
    y = q.copy()
    for ki in range(k):
        y[:, :, ops.group_of[ki]] += np.einsum("ab,rmb->rma", ops.pilot_prop[ki], h[:, :, ki])
    hh = np.empty_like(h)
    for ki in range(k):
        gi = ops.group_of[ki]
        hh[:, :, ki] = np.einsum("mab,rmb->rma", ops.w_est[:, ki], y[:, :, gi])
    hc = h.reshape(c, m, k, n_dim, l_dim).swapaxes(3, 4)
    hhat = hh.reshape(c, m, k, n_dim, l_dim).swapaxes(3, 4)
    if lmmse:
        a_mat = cps[None, :, :, :] + np.einsum(
            "rmkua,kab,rmkvb->rmuv", hhat, f_bar, hhat.conj()
        )
        rhs = np.einsum("rmkua,kab->rmukb", hhat, f_u).reshape(c, m, l_dim, k * n_dim)
        v = np.linalg.solve(a_mat, rhs).reshape(c, m, l_dim, k, n_dim).transpose(0, 1, 3, 2, 4)
    else:
        v = hhat
    return hc, v


def _stats_chunk_numpy(ops, f_bar, f_u, cps, lmmse, want_second, want_sq, g, q, acc):
    c = g.shape[0]
    m, k = ops.m, ops.k
    n_dim = ops.n_dim
    mn = m * n_dim
    hc, v = _realize_numpy(ops, f_bar, f_u, cps, lmmse, g, q)
    for ki in range(k):
        acc["s"][ki] += np.einsum("rmua,rmub->mab", v[:, :, ki].conj(), v[:, :, ki])
        for li in range(k):
            gm = np.einsum("rmua,rmub->rmab", v[:, :, ki].conj(), hc[:, :, li])
            gm = gm.reshape(c, mn, n_dim)
            if li == ki:
                acc["z"][ki] += gm.sum(axis=0)
                if want_sq:
                    acc["z_sq"][ki] += (np.abs(gm) ** 2).sum(axis=0)
            if want_second:
                t = gm.swapaxes(1, 2).reshape(c, n_dim * mn)
                acc["second"][ki, li] += (t.T @ t.conj()).reshape(n_dim, mn, n_dim, mn)
                if want_sq:
                    t2 = np.abs(t) ** 2
                    acc["second_sq"][ki, li] += (t2.T @ t2).reshape(n_dim, mn, n_dim, mn)
            else:
                term = np.einsum("roa,rja->roj", gm @ f_bar[li], gm.conj())
                acc["gram"][ki, li] += term.sum(axis=0)
                if want_sq:
                    acc["gram_sq"][ki, li] += (np.abs(term) ** 2).sum(axis=0)


def _cross_chunk_numpy(ops, f_bar, f_u, cps, lmmse, a_bar, want_sq, g, q, cross, cross_sq):
    c = g.shape[0]
    m, k = ops.m, ops.k
    n_dim = ops.n_dim
    mn = m * n_dim
    hc, v = _realize_numpy(ops, f_bar, f_u, cps, lmmse, g, q)
    for ki in range(k):          # owner of the precoder being updated
        for li in range(k):      # estimating UE
            gm = np.einsum("rmua,rmub->rmab", v[:, :, li].conj(), hc[:, :, ki])
            gm = gm.reshape(c, mn, n_dim)
            t1 = np.einsum("oj,rjb->rob", a_bar[li], gm)
            term = np.einsum("ron,roi->rni", gm.conj(), t1)
            cross[ki, li] += term.sum(axis=0)
            if want_sq:
                cross_sq[ki, li] += (np.abs(term) ** 2).sum(axis=0)


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _realize_one(r, g, q, factor, w_est, prop, group_of, f_bar, f_u, cps,
                     lmmse, h, y, hh, hc, vc):
        m, k, ln = g.shape[1], g.shape[2], g.shape[3]
        n_groups = q.shape[2]
        n_dim = f_bar.shape[1]
        l_dim = ln // n_dim
        for mi in range(m):
            for ki in range(k):
                for a in range(ln):
                    s = 0.0 + 0.0j
                    for b in range(ln):
                        s += factor[mi, ki, a, b] * g[r, mi, ki, b]
                    h[mi, ki, a] = s
        for mi in range(m):
            for gi in range(n_groups):
                for a in range(ln):
                    y[mi, gi, a] = q[r, mi, gi, a]
            for ki in range(k):
                gi = group_of[ki]
                for a in range(ln):
                    s = 0.0 + 0.0j
                    for b in range(ln):
                        s += prop[ki, a, b] * h[mi, ki, b]
                    y[mi, gi, a] += s
        for mi in range(m):
            for ki in range(k):
                gi = group_of[ki]
                for a in range(ln):
                    s = 0.0 + 0.0j
                    for b in range(ln):
                        s += w_est[mi, ki, a, b] * y[mi, gi, b]
                    hh[mi, ki, a] = s
        for mi in range(m):
            for ki in range(k):
                for u in range(l_dim):
                    for n in range(n_dim):
                        hc[mi, ki, u, n] = h[mi, ki, n * l_dim + u]
        if lmmse:
            am = np.empty((l_dim, l_dim), np.complex128)
            bm = np.empty((l_dim, n_dim), np.complex128)
            fh = np.empty((l_dim, n_dim), np.complex128)
            for mi in range(m):
                for u in range(l_dim):
                    for w in range(l_dim):
                        am[u, w] = cps[mi, u, w]
                for ki in range(k):
                    for u in range(l_dim):
                        for b in range(n_dim):
                            s = 0.0 + 0.0j
                            for a in range(n_dim):
                                s += hh[mi, ki, a * l_dim + u] * f_bar[ki, a, b]
                            fh[u, b] = s
                    for u in range(l_dim):
                        for w in range(l_dim):
                            s = 0.0 + 0.0j
                            for b in range(n_dim):
                                s += fh[u, b] * np.conj(hh[mi, ki, b * l_dim + w])
                            am[u, w] += s
                for ki in range(k):
                    for u in range(l_dim):
                        for b in range(n_dim):
                            s = 0.0 + 0.0j
                            for a in range(n_dim):
                                s += hh[mi, ki, a * l_dim + u] * f_u[ki, a, b]
                            bm[u, b] = s
                    x = np.linalg.solve(am, bm)
                    for u in range(l_dim):
                        for b in range(n_dim):
                            vc[mi, ki, u, b] = x[u, b]
        else:
            for mi in range(m):
                for ki in range(k):
                    for u in range(l_dim):
                        for n in range(n_dim):
                            vc[mi, ki, u, n] = hh[mi, ki, n * l_dim + u]

    @njit(cache=True)
    def _build_g(ki, li, hc, vc, gkl):
        m = hc.shape[0]
        l_dim = hc.shape[2]
        n_dim = hc.shape[3]
        for mi in range(m):
            for a in range(n_dim):
                for b in range(n_dim):
                    s = 0.0 + 0.0j
                    for u in range(l_dim):
                        s += np.conj(vc[mi, ki, u, a]) * hc[mi, li, u, b]
                    gkl[mi * n_dim + a, b] = s

    @njit(cache=True)
    def _stats_chunk_numba(g, q, factor, w_est, prop, group_of, f_bar, f_u, cps,
                           lmmse, want_second, want_sq,
                           zsum, zsq, ssum, gram, gram_sq, qsum, qsq):
        c, m, k, ln = g.shape
        n_groups = q.shape[2]
        n_dim = f_bar.shape[1]
        l_dim = ln // n_dim
        mn = m * n_dim
        h = np.empty((m, k, ln), np.complex128)
        y = np.empty((m, n_groups, ln), np.complex128)
        hh = np.empty((m, k, ln), np.complex128)
        hc = np.empty((m, k, l_dim, n_dim), np.complex128)
        vc = np.empty((m, k, l_dim, n_dim), np.complex128)
        gkl = np.empty((mn, n_dim), np.complex128)
        gct = np.empty((n_dim, mn), np.complex128)
        tm = np.empty((mn, n_dim), np.complex128)
        for r in range(c):
            _realize_one(r, g, q, factor, w_est, prop, group_of, f_bar, f_u,
                         cps, lmmse, h, y, hh, hc, vc)
            for ki in range(k):
                for mi in range(m):
                    for a in range(n_dim):
                        for b in range(n_dim):
                            s = 0.0 + 0.0j
                            for u in range(l_dim):
                                s += np.conj(vc[mi, ki, u, a]) * vc[mi, ki, u, b]
                            ssum[ki, mi, a, b] += s
                for li in range(k):
                    _build_g(ki, li, hc, vc, gkl)
                    if li == ki:
                        for o in range(mn):
                            for b in range(n_dim):
                                zsum[ki, o, b] += gkl[o, b]
                                if want_sq:
                                    t = gkl[o, b]
                                    zsq[ki, o, b] += t.real * t.real + t.imag * t.imag
                    if want_second:
                        # contiguous conjugate transpose keeps the inner
                        # accumulation loop unit-stride
                        for i in range(n_dim):
                            for j in range(mn):
                                gct[i, j] = np.conj(gkl[j, i])
                        for n in range(n_dim):
                            for o in range(mn):
                                gv = gkl[o, n]
                                for i in range(n_dim):
                                    if want_sq:
                                        for j in range(mn):
                                            t = gv * gct[i, j]
                                            qsum[ki, li, n, o, i, j] += t
                                            qsq[ki, li, n, o, i, j] += (
                                                t.real * t.real + t.imag * t.imag
                                            )
                                    else:
                                        for j in range(mn):
                                            qsum[ki, li, n, o, i, j] += gv * gct[i, j]
                    else:
                        for o in range(mn):
                            for b in range(n_dim):
                                s = 0.0 + 0.0j
                                for a in range(n_dim):
                                    s += gkl[o, a] * f_bar[li, a, b]
                                tm[o, b] = s
                        for o in range(mn):
                            for j in range(mn):
                                s = 0.0 + 0.0j
                                for b in range(n_dim):
                                    s += tm[o, b] * np.conj(gkl[j, b])
                                gram[ki, li, o, j] += s
                                if want_sq:
                                    gram_sq[ki, li, o, j] += s.real * s.real + s.imag * s.imag

    @njit(cache=True)
    def _cross_chunk_numba(g, q, factor, w_est, prop, group_of, f_bar, f_u, cps,
                           lmmse, a_bar, want_sq, cross, cross_sq):
        c, m, k, ln = g.shape
        n_groups = q.shape[2]
        n_dim = f_bar.shape[1]
        l_dim = ln // n_dim
        mn = m * n_dim
        h = np.empty((m, k, ln), np.complex128)
        y = np.empty((m, n_groups, ln), np.complex128)
        hh = np.empty((m, k, ln), np.complex128)
        hc = np.empty((m, k, l_dim, n_dim), np.complex128)
        vc = np.empty((m, k, l_dim, n_dim), np.complex128)
        glk = np.empty((mn, n_dim), np.complex128)
        t1 = np.empty((mn, n_dim), np.complex128)
        for r in range(c):
            _realize_one(r, g, q, factor, w_est, prop, group_of, f_bar, f_u,
                         cps, lmmse, h, y, hh, hc, vc)
            for ki in range(k):
                for li in range(k):
                    _build_g(li, ki, hc, vc, glk)
                    for o in range(mn):
                        for b in range(n_dim):
                            s = 0.0 + 0.0j
                            for j in range(mn):
                                s += a_bar[li, o, j] * glk[j, b]
                            t1[o, b] = s
                    for n in range(n_dim):
                        for i in range(n_dim):
                            s = 0.0 + 0.0j
                            for o in range(mn):
                                s += np.conj(glk[o, n]) * t1[o, i]
                            cross[ki, li, n, i] += s
                            if want_sq:
                                cross_sq[ki, li, n, i] += s.real * s.real + s.imag * s.imag


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def _alloc_stats(m, k, n_dim, want_second, want_sq):
    mn = m * n_dim
    acc = {
        "z": np.zeros((k, mn, n_dim), dtype=complex),
        "s": np.zeros((k, m, n_dim, n_dim), dtype=complex),
        "z_sq": np.zeros((k, mn, n_dim) if want_sq else (0, 0, 0)),
        "gram": np.zeros((k, k, mn, mn) if not want_second else (0, 0, 0, 0), dtype=complex),
        "gram_sq": np.zeros(
            (k, k, mn, mn) if (not want_second and want_sq) else (0, 0, 0, 0)
        ),
        "second": np.zeros(
            (k, k, n_dim, mn, n_dim, mn) if want_second else (0, 0, 0, 0, 0, 0),
            dtype=complex,
        ),
        "second_sq": np.zeros(
            (k, k, n_dim, mn, n_dim, mn) if (want_second and want_sq) else (0, 0, 0, 0, 0, 0)
        ),
    }
    return acc


def decode_pass(ops, f_u, f_bar, combiner, cps, n_r, seed, *,
                want_second=False, want_sq=False, backend=None, chunk=CHUNK_SIZE):
    """Accumulate decode statistics over ``n_r`` realizations.

    Returns a dict with keys z, s, and gram or second (plus *_sq running
    sums of squared magnitudes when requested).  All entries are running
    sums; divide by ``n_r`` for means.
    """
    backend = resolve(backend)
    lmmse = combiner == "lmmse"
    f_u = np.ascontiguousarray(f_u, dtype=complex)
    f_bar = np.ascontiguousarray(f_bar, dtype=complex)
    cps = np.ascontiguousarray(cps, dtype=complex)
    acc = _alloc_stats(ops.m, ops.k, ops.n_dim, want_second, want_sq)
    pair_rngs = _pair_rngs(seed, ops.m, ops.k)
    noise_rngs = _noise_rngs(seed, ops.m, ops.n_groups)
    done = 0
    while done < n_r:
        c = min(chunk, n_r - done)
        g, q = _draw_chunk(ops, pair_rngs, noise_rngs, c)
        if backend == "numba":
            _stats_chunk_numba(
                g, q, ops.factor, ops.w_est, ops.pilot_prop, ops.group_of,
                f_bar, f_u, cps, lmmse, want_second, want_sq,
                acc["z"], acc["z_sq"], acc["s"], acc["gram"], acc["gram_sq"],
                acc["second"], acc["second_sq"],
            )
        else:
            _stats_chunk_numpy(ops, f_bar, f_u, cps, lmmse, want_second, want_sq, g, q, acc)
        done += c
    return acc


def cross_pass(ops, f_u, f_bar, combiner, cps, a_bar, n_r, seed, *,
               want_sq=False, backend=None, chunk=CHUNK_SIZE):
    """Accumulate G_lk^H Abar_l G_lk per (k, l) pair over realizations.

    Reuses the same named random streams as :func:`decode_pass`, so for a
    given seed both passes see identical channel and noise realizations.
    Returns running sums indexed [k, l] (plus squared magnitudes when
    requested).
    """
    backend = resolve(backend)
    lmmse = combiner == "lmmse"
    f_u = np.ascontiguousarray(f_u, dtype=complex)
    f_bar = np.ascontiguousarray(f_bar, dtype=complex)
    cps = np.ascontiguousarray(cps, dtype=complex)
    a_bar = np.ascontiguousarray(a_bar, dtype=complex)
    cross = np.zeros((ops.k, ops.k, ops.n_dim, ops.n_dim), dtype=complex)
    cross_sq = np.zeros(
        (ops.k, ops.k, ops.n_dim, ops.n_dim) if want_sq else (0, 0, 0, 0)
    )
    pair_rngs = _pair_rngs(seed, ops.m, ops.k)
    noise_rngs = _noise_rngs(seed, ops.m, ops.n_groups)
    done = 0
    while done < n_r:
        c = min(chunk, n_r - done)
        g, q = _draw_chunk(ops, pair_rngs, noise_rngs, c)
        if backend == "numba":
            _cross_chunk_numba(
                g, q, ops.factor, ops.w_est, ops.pilot_prop, ops.group_of,
                f_bar, f_u, cps, lmmse, a_bar, want_sq, cross, cross_sq,
            )
        else:
            _cross_chunk_numpy(ops, f_bar, f_u, cps, lmmse, a_bar, want_sq,
                               g, q, cross, cross_sq)
        done += c
    return cross, (cross_sq if want_sq else None)
