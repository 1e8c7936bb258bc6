"""Small dense linear-algebra kernels.

Everything in the TT layer eventually reduces to QR, truncated SVD,
symmetric eigenproblems, Cholesky and maxvol on matrices whose sides are
a product of a rank and a mode size.  None of these routines know about
TT types.
"""

import numpy as np
import scipy.linalg

from .errors import FullyDegenerateMass, NotPositiveDefinite, SingularSubmatrix

MASS_FILTER = 1e-10
CHOLESKY_PIVOT_TOL = 1e-14


def qr_factor(A):
    """Thin QR factorization ``A = Q R``.

    Rank-deficient input is allowed; ``R`` then carries near-zero diagonal
    entries while ``Q`` still has orthonormal columns.
    """
    A = np.asarray(A, dtype=float)
    Q, R = np.linalg.qr(A, mode="reduced")
    return Q, R


def svd_truncated(A, abs_tol=0.0, max_rank=None):
    """Truncated SVD with an absolute Frobenius tolerance.

    Parameters
    ----------
    A : ndarray, shape (m, n)
    abs_tol : float
        Largest admissible Frobenius norm of the discarded part.
    max_rank : int or None
        Hard cap on the kept rank.

    Returns
    -------
    U : ndarray, shape (m, k)
    S : ndarray, shape (k,)
        Nonnegative, nonincreasing.
    V : ndarray, shape (n, k)
        ``A ~= U @ diag(S) @ V.T``.

    Notes
    -----
    At least one triple is always kept so that a zero matrix still has a
    valid rank-1 (zero) factorization.
    """
    if abs_tol < 0:
        raise ValueError("abs_tol must be nonnegative")
    A = np.asarray(A, dtype=float)
    try:
        U, S, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError:
        U, S, Vt = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
    # tail[k] = norm of S[k:]
    tail = np.sqrt(np.cumsum((S * S)[::-1])[::-1])
    tail = np.append(tail, 0.0)
    k = int(np.argmax(tail <= abs_tol))
    k = max(k, 1)
    if max_rank is not None:
        k = min(k, int(max_rank))
    k = min(k, S.size)
    return U[:, :k], S[:k], Vt[:k].T


def _check_symmetric(A, name):
    scale = max(np.abs(A).max(initial=0.0), 1e-300)
    if np.abs(A - A.T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError(f"{name} is not symmetric")


def sym_eig(A, M=None, filter_tol=MASS_FILTER):
    """Symmetric (generalized) eigendecomposition, ascending.

    Solves ``A S = M S diag(w)`` with ``S.T M S = I``.  Directions in which
    ``M`` has eigenvalue below ``filter_tol * max(eig(M))`` are removed
    first, so the number of returned pairs can be smaller than ``A.shape[0]``.
    """
    A = np.asarray(A, dtype=float)
    _check_symmetric(A, "A")
    A = 0.5 * (A + A.T)
    if M is None:
        return np.linalg.eigh(A)
    M = np.asarray(M, dtype=float)
    _check_symmetric(M, "M")
    m, V = np.linalg.eigh(0.5 * (M + M.T))
    mmax = m.max(initial=0.0)
    if mmax <= 0:
        raise FullyDegenerateMass("mass matrix has no positive direction")
    keep = m > filter_tol * mmax
    T = V[:, keep] / np.sqrt(m[keep])
    w, W = np.linalg.eigh(T.T @ A @ T)
    return w, T @ W


def cholesky(G):
    """Lower Cholesky factor with a relative pivot guard.

    Raises
    ------
    NotPositiveDefinite
        If a pivot falls to or below ``1e-14 * max(diag(G))``; for Gram
        matrices this means the block vectors are numerically dependent.
    """
    G = np.asarray(G, dtype=float)
    _check_symmetric(G, "G")
    dmax = np.diag(G).max(initial=0.0)
    if dmax <= 0:
        raise NotPositiveDefinite("Gram matrix has no positive diagonal")
    try:
        L = np.linalg.cholesky(0.5 * (G + G.T))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    pivots = np.diag(L) ** 2
    if np.any(pivots <= CHOLESKY_PIVOT_TOL * dmax):
        raise NotPositiveDefinite(f"pivot {pivots.min():.3e} below threshold")
    return L


def maxvol(A, tol=1.01, max_swaps=100):
    """Rows of a tall matrix spanning a locally maximal-volume submatrix.

    Starts from the rows chosen by pivoted QR and swaps rows while some
    entry of ``A @ inv(A[idx])`` exceeds ``tol`` in magnitude.

    Returns
    -------
    idx : ndarray of int, shape (r,)
    """
    A = np.asarray(A, dtype=float)
    n, r = A.shape
    if n < r:
        raise ValueError("maxvol needs at least as many rows as columns")
    _, _, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    idx = np.array(piv[:r], dtype=int)
    sub = A[idx]
    s = np.linalg.svd(sub, compute_uv=False)
    if s[-1] <= 1e-14 * max(s[0], 1e-300):
        raise SingularSubmatrix("matrix is rank deficient")
    B = np.linalg.solve(sub.T, A.T).T
    for _ in range(max_swaps):
        i, j = np.unravel_index(np.argmax(np.abs(B)), B.shape)
        pivot = B[i, j]
        if abs(pivot) <= tol:
            break
        idx[j] = i
        col = B[:, j].copy()
        row = B[i, :].copy()
        row[j] -= 1.0
        B -= np.outer(col, row / pivot)
    return idx
