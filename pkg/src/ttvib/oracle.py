"""Brute-force reference computations for verification.

Nothing here calls the TT arithmetic it is meant to check: entries are
read straight from the cores with explicit loops over multi-indices, and
eigenproblems go to LAPACK on dense matrices.  Only intended for small
sizes.
"""

import itertools
import math

import numpy as np
import scipy.linalg

from .errors import TooLarge

DENSE_EIG_LIMIT = 10**4
BRUTE_LIMIT = 10**6


def dense_eigensolve(H, B):
    """The ``B`` smallest eigenpairs of a dense symmetric matrix.

    Returns
    -------
    lam : ndarray, shape (B,)
    V : ndarray, shape (N, B)
        Orthonormal eigenvectors as columns.
    """
    H = np.asarray(H, dtype=float)
    N = H.shape[0]
    if N > DENSE_EIG_LIMIT:
        raise TooLarge(f"dimension {N} exceeds {DENSE_EIG_LIMIT}")
    if not 1 <= B <= N:
        raise ValueError("B must be between 1 and the dimension")
    lam, V = scipy.linalg.eigh(0.5 * (H + H.T), subset_by_index=[0, B - 1])
    return lam, V


def _indices(sizes):
    if math.prod(sizes) > BRUTE_LIMIT:
        raise TooLarge("too many entries for a brute-force loop")
    return itertools.product(*[range(n) for n in sizes])


def brute_entry(cores, index):
    """One entry of a TT tensor as an explicit product of core slices."""
    v = np.ones((1, 1))
    for c, i in zip(cores, index):
        v = v @ c[:, i, :]
    return float(v[0, 0])


def brute_tensor(X):
    """Dense array of a TT tensor, one entry at a time."""
    sizes = tuple(c.shape[1] for c in X.cores)
    out = np.empty(sizes)
    for idx in _indices(sizes):
        out[idx] = brute_entry(X.cores, idx)
    return out


def brute_operator(H):
    """Dense matrix of a TT operator (rows and columns in C order)."""
    rows = tuple(c.shape[1] for c in H.cores)
    cols = tuple(c.shape[2] for c in H.cores)
    out = np.empty((math.prod(rows), math.prod(cols)))
    for a, i in enumerate(_indices(rows)):
        for b, j in enumerate(_indices(cols)):
            v = np.ones((1, 1))
            for c, ik, jk in zip(H.cores, i, j):
                v = v @ c[:, ik, jk, :]
            out[a, b] = v[0, 0]
    return out


def brute_inner(X, Y):
    total = 0.0
    sizes = tuple(c.shape[1] for c in X.cores)
    for idx in _indices(sizes):
        total += brute_entry(X.cores, idx) * brute_entry(Y.cores, idx)
    return total


def brute_matvec(H, X):
    """``H(X)`` as a dense array, by a double loop over indices."""
    return (brute_operator(H) @ brute_tensor(X).ravel()).reshape(
        tuple(c.shape[1] for c in H.cores))


def brute_map(f, tensors):
    """Entrywise ``f`` of several TT tensors, evaluated entry by entry."""
    sizes = tuple(c.shape[1] for c in tensors[0].cores)
    out = np.empty(sizes)
    for idx in _indices(sizes):
        vals = np.array([[brute_entry(t.cores, idx)] for t in tensors])
        out[idx] = np.asarray(f(vals)).ravel()[0]
    return out
