"""Block-vector algebra: Gram matrices, Cholesky-QR, deflation, Rayleigh-Ritz."""

import numpy as np

from .blockvector import BlockVector, concat
from .cross import DIRECT_LIMIT, block_matvec
from .dense import cholesky, sym_eig
from .errors import ShapeMismatch
from .tt import matvec, tt_round

__all__ = ["BlockVector", "concat", "gram", "block_qr", "ortho_against",
           "truncate_block", "rayleigh_ritz", "block_matvec"]

QR2_THRESHOLD = 1e-6


def _stacked(block):
    ranks = [max(r) for r in zip(*(m.ranks for m in block.members))]
    out = []
    for k, n in enumerate(block.mode_sizes):
        z = np.zeros((len(block), ranks[k], n, ranks[k + 1]))
        for p, m in enumerate(block.members):
            c = m.cores[k]
            z[p, :c.shape[0], :, :c.shape[2]] = c
        out.append(z)
    return out


def gram(X, Y):
    """Matrix of inner products ``G[i, j] = <X_i, Y_j>``."""
    if X.mode_sizes != Y.mode_sizes:
        raise ShapeMismatch(f"{X.mode_sizes} vs {Y.mode_sizes}")
    ys = _stacked(Y)
    G = np.empty((len(X), len(Y)))
    for i, x in enumerate(X.members):
        v = np.ones((len(Y), 1, 1))                          # (y, a, b)
        for c, y in zip(x.cores, ys):
            a, n, s = c.shape
            t = np.tensordot(v, c, axes=(1, 0))              # y b i s
            t = t.transpose(0, 3, 1, 2).reshape(len(Y), s, -1)
            v = np.matmul(t, y.reshape(len(Y), -1, y.shape[3]))
        G[i] = v[:, 0, 0]
    return G


def _gram_deviation(Q):
    G = gram(Q, Q)
    return float(np.abs(G - np.eye(len(Q))).max())


def block_qr(X, max_rank=None, rel_tol=1e-12, method="auto"):
    """Orthonormalize a block through the Cholesky factor of its Gram matrix.

    ``Q = L^{-1} X`` with ``G = L L^T``.  A second pass is made when the
    first leaves the Gram matrix more than 1e-6 away from the identity.

    Raises
    ------
    NotPositiveDefinite
        If the members are numerically linearly dependent.
    """
    Q = X
    for attempt in range(2):
        L = cholesky(gram(Q, Q))
        Linv = np.linalg.solve(L, np.eye(len(Q)))
        Q = block_matvec(Q, Linv, max_rank=max_rank, rel_tol=rel_tol, method=method)
        if _gram_deviation(Q) <= QR2_THRESHOLD:
            break
    return BlockVector(Q.members, X.max_rank)


def ortho_against(X, Q, rel_tol=1e-12, max_rank=None, passes=2, tol=1e-8, method="auto"):
    """Project the span of ``Q`` (orthonormal) out of every member of ``X``.

    ``Y_i = X_i - sum_j <X_i, Q_j> Q_j``; a second projection is made if
    some ``|<Y_i, Q_j>|`` still exceeds ``tol * ||Y_i||``.  ``Q`` is never
    modified.  ``method`` is passed to ``block_matvec``; ``auto`` picks the
    direct path when ``Q`` has fewer than 20 members.
    """
    if Q is None or len(Q) == 0:
        return X
    if X.mode_sizes != Q.mode_sizes:
        raise ShapeMismatch("blocks have different mode sizes")
    B, q = len(X), len(Q)
    if method == "auto":
        method = "direct" if q < DIRECT_LIMIT else "cross"
    Y = X
    for _ in range(passes):
        C = gram(Y, Q)
        norms = np.sqrt(np.maximum(np.diag(gram(Y, Y)), 0.0))
        if np.all(np.abs(C) <= tol * norms[:, None]):
            break
        M = np.hstack([np.eye(B), -C])
        Y = block_matvec(concat(Y, Q), M, max_rank=max_rank, rel_tol=rel_tol,
                         method=method)
    return BlockVector(Y.members, X.max_rank)


def truncate_block(X, rank, rel_tol=1e-14):
    """Round every member to ranks ``<= rank``."""
    return BlockVector([tt_round(m, rel_tol, rank) for m in X.members], X.max_rank)


def rayleigh_ritz(Z, H, HZ=None, filter_tol=1e-10):
    """Ritz pairs of ``H`` on the span of a block.

    Solves ``Ht S = Mt S Lambda`` with ``Ht = Z^T H Z`` and ``Mt = Z^T Z``;
    near-dependent directions of ``Mt`` are filtered out first.

    Parameters
    ----------
    Z : BlockVector or sequence of BlockVector
        Concatenated if a sequence is given.
    HZ : BlockVector, optional
        Precomputed ``H(Z_i)``.

    Returns
    -------
    lam : ndarray
        Ritz values, ascending.
    S : ndarray, shape (len(Z), k)
        Coefficients, ``S^T Mt S = I``.
    """
    if not isinstance(Z, BlockVector):
        Z = concat(*Z)
    if HZ is None:
        HZ = BlockVector([matvec(H, z) for z in Z.members])
    Ht = gram(Z, HZ)
    Ht = 0.5 * (Ht + Ht.T)
    Mt = gram(Z, Z)
    Mt = 0.5 * (Mt + Mt.T)
    return sym_eig(Ht, Mt, filter_tol)
