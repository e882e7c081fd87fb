"""Dense complex linear-algebra kernels shared by all simulator stages.

Everything here operates on plain ``numpy`` arrays of ``complex128``.  The
matrices handled by the simulator are Hermitian (or nearly Hermitian after
Monte-Carlo averaging), frequently rank deficient, and of moderate size
(up to a few hundred rows), so eigendecomposition-based routines with
explicit clamping/ridging are both robust and cheap.
"""

import numpy as np

# Eigenvalues below EIG_CLIP * lambda_max are treated as exact zeros
# (estimate covariances are rank deficient by construction under pilot
# sharing, so tiny negative eigenvalues are expected rounding debris).
EIG_CLIP = 1e-12

# Relative ridge added before factorizing statistically assembled matrices.
RIDGE = 1e-10


def herm(a):
    """Hermitian part (a + a^H) / 2."""
    return 0.5 * (a + a.conj().T)


def check_hermitian(a, tol=1e-10, what="matrix"):
    """Raise ValueError if ``a`` is not Hermitian within relative ``tol``."""
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be square, got shape {a.shape}")
    scale = np.linalg.norm(a)
    resid = np.linalg.norm(a - a.conj().T)
    if resid > tol * max(scale, 1e-300):
        raise ValueError(
            f"{what} is not Hermitian: relative symmetry residual "
            f"{resid / max(scale, 1e-300):.3e} exceeds {tol:.1e}"
        )


def hermitian_sqrt(a, tol=1e-10):
    """Principal square root of a Hermitian PSD matrix.

    Parameters
    ----------
    a : (d, d) complex ndarray
        Hermitian positive semidefinite matrix.  Eigenvalues below
        ``EIG_CLIP`` times the largest eigenvalue are clamped to zero, so
        mildly indefinite inputs produced by floating-point accumulation
        are accepted.
    tol : float
        Relative symmetry tolerance; inputs violating it are rejected.

    Returns
    -------
    (d, d) complex ndarray
        Hermitian PSD matrix B with B @ B == a (up to clamped eigenvalues).
    """
    check_hermitian(a, tol=tol, what="hermitian_sqrt input")
    w, v = np.linalg.eigh(herm(a))
    w = np.where(w > EIG_CLIP * max(w[-1], 0.0), w, 0.0)
    return herm((v * np.sqrt(w)) @ v.conj().T)


def solve_hpd(a, b, ridge=RIDGE):
    """Solve a x = b for Hermitian positive (semi)definite ``a``.

    The Hermitian part of ``a`` is factorized as-is when it is positive
    definite; only if the Cholesky factorization fails (covariance-type
    matrices assembled from Monte-Carlo statistics can be numerically
    semidefinite) is a relative ridge ``ridge * trace(a) / dim`` added and
    the factorization retried.  Keeping well-posed systems ridge-free
    preserves the exact algebraic identities between equivalent
    spectral-efficiency expressions.

    Raises
    ------
    ValueError
        On dimension mismatch.
    numpy.linalg.LinAlgError
        If ``a`` is indefinite beyond what the ridge can repair.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"coefficient matrix must be square, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    dim = a.shape[0]
    a_h = herm(a)
    try:
        np.linalg.cholesky(a_h)
        return np.linalg.solve(a_h, b)
    except np.linalg.LinAlgError:
        pass
    trace = np.real(np.trace(a_h))
    if trace <= 0:
        raise np.linalg.LinAlgError("matrix has non-positive trace, cannot ridge")
    eps = ridge * trace / dim
    a_r = a_h + eps * np.eye(dim)
    # Cholesky certifies positive definiteness after the ridge.
    np.linalg.cholesky(a_r)
    return np.linalg.solve(a_r, b)


def inv_hpd(a, ridge=RIDGE):
    """Inverse of a Hermitian PD matrix via the ridged solve."""
    return solve_hpd(a, np.eye(a.shape[0], dtype=complex), ridge=ridge)


def kron_vec(a, b, x):
    """Apply (a kron b) to vec(x) without forming the Kronecker product.

    Uses the identity (a kron b) vec(x) = vec(b @ x @ a.T) with
    column-major vec, and returns the result in matrix (un-vectorized)
    form of shape (rows(b), rows(a)).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    x = np.asarray(x)
    if x.shape != (b.shape[1], a.shape[1]):
        raise ValueError(
            f"x must have shape ({b.shape[1]}, {a.shape[1]}), got {x.shape}"
        )
    return b @ x @ a.T


def vec(x):
    """Column-stacking vectorization."""
    return x.reshape(-1, order="F")


def unvec(v, rows):
    """Inverse of :func:`vec` for a known row count."""
    return v.reshape(rows, -1, order="F")


def block(x, n, i, l_dim):
    """(n, i) block of size l_dim x l_dim of a square block matrix.

    Blocks are indexed 0-based; ``x`` has shape (l_dim*N, l_dim*N) and the
    (n, i) block is rows n*l_dim:(n+1)*l_dim, columns i*l_dim:(i+1)*l_dim.
    """
    dim = x.shape[0]
    n_blocks = dim // l_dim
    if dim % l_dim or x.shape[0] != x.shape[1]:
        raise ValueError(f"matrix of shape {x.shape} has no {l_dim}-blocks")
    if not (0 <= n < n_blocks and 0 <= i < n_blocks):
        raise ValueError(f"block index ({n}, {i}) out of range for N={n_blocks}")
    return x[n * l_dim:(n + 1) * l_dim, i * l_dim:(i + 1) * l_dim]


def as_blocks(x, l_dim):
    """View an (L*N, L*N) matrix as an (N, N, L, L) array of blocks."""
    dim = x.shape[0]
    n = dim // l_dim
    if dim % l_dim or x.shape[0] != x.shape[1]:
        raise ValueError(f"matrix of shape {x.shape} has no {l_dim}-blocks")
    return x.reshape(n, l_dim, n, l_dim).transpose(0, 2, 1, 3)


def block_trace_matrix(x, l_dim):
    """N x N matrix whose (n, n') entry is the trace of block (n', n)."""
    xb = as_blocks(x, l_dim)
    # [out]_{n n'} = tr(x^{n' n})
    return np.einsum("abii->ba", xb)


def block_trace_table(x, y, l_dim):
    """Table of block-product traces t[n, i, p, q] = tr(x^{ni} y^{qp}).

    Both inputs are (L*N, L*N); the result has shape (N, N, N, N) and turns
    the quadruple index sums of the closed-form second-order statistics
    into plain tensor contractions.
    """
    xb = as_blocks(x, l_dim)
    yb = as_blocks(y, l_dim)
    return np.einsum("niuv,qpvu->nipq", xb, yb)


def logdet_pd(a):
    """log2 determinant of a Hermitian PD matrix."""
    sign, logabs = np.linalg.slogdet(a)
    return logabs / np.log(2.0)
