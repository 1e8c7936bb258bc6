"""Tensor-train tensors and operators.

A tensor with mode sizes ``n_1..n_d`` is stored as cores ``G_k`` of shape
``(r_{k-1}, n_k, r_k)`` with ``r_0 = r_d = 1``; an operator stores cores of
shape ``(R_{k-1}, n_k, m_k, R_k)``.  Dense conversions use C order, so the
first mode is the slowest-varying index.

Both classes are treated as immutable values: core arrays are flagged
read-only and every operation returns a new object.
"""

import math

import numpy as np

from .dense import qr_factor, svd_truncated
from .errors import IndexOutOfRange, ShapeMismatch, TooLarge

DENSE_LIMIT = 10**7


def _freeze(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


class TtTensor:
    """A d-dimensional tensor in TT format."""

    __slots__ = ("cores",)

    def __init__(self, cores):
        cores = tuple(_freeze(c) for c in cores)
        if not cores:
            raise ValueError("a TT tensor needs at least one core")
        for c in cores:
            if c.ndim != 3:
                raise ValueError("TT cores must be 3-dimensional")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for a, b in zip(cores[:-1], cores[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError("adjacent core ranks do not match")
        self.cores = cores

    @property
    def d(self):
        return len(self.cores)

    @property
    def mode_sizes(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self):
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def num_params(self):
        return sum(c.size for c in self.cores)

    def __getitem__(self, index):
        return element(self, index)

    def __repr__(self):
        return f"TtTensor(mode_sizes={self.mode_sizes}, ranks={self.ranks})"

    def __add__(self, other):
        return add_scaled(1.0, self, 1.0, other)

    def __sub__(self, other):
        return add_scaled(1.0, self, -1.0, other)

    def __mul__(self, alpha):
        return scale(self, alpha)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def round(self, rel_tol=1e-14, max_rank=None):
        return tt_round(self, rel_tol, max_rank)

    def norm(self):
        return norm(self)

    def full(self):
        return to_dense(self)


class TtOperator:
    """A linear map between TT spaces, stored as a TT-matrix."""

    __slots__ = ("cores",)

    def __init__(self, cores):
        cores = tuple(_freeze(c) for c in cores)
        if not cores:
            raise ValueError("a TT operator needs at least one core")
        for c in cores:
            if c.ndim != 4:
                raise ValueError("TT operator cores must be 4-dimensional")
        if cores[0].shape[0] != 1 or cores[-1].shape[3] != 1:
            raise ValueError("boundary ranks must be 1")
        for a, b in zip(cores[:-1], cores[1:]):
            if a.shape[3] != b.shape[0]:
                raise ValueError("adjacent core ranks do not match")
        self.cores = cores

    @property
    def d(self):
        return len(self.cores)

    @property
    def row_sizes(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def col_sizes(self):
        return tuple(c.shape[2] for c in self.cores)

    @property
    def ranks(self):
        return (1,) + tuple(c.shape[3] for c in self.cores)

    def __repr__(self):
        return (f"TtOperator(row_sizes={self.row_sizes}, "
                f"col_sizes={self.col_sizes}, ranks={self.ranks})")

    def __matmul__(self, other):
        if isinstance(other, TtTensor):
            return matvec(self, other)
        if isinstance(other, TtOperator):
            return op_matmul(self, other)
        return NotImplemented

    def __add__(self, other):
        return op_add(self, other)

    def full(self):
        return to_dense(self)


# ---------------------------------------------------------------- builders

def feasible_ranks(mode_sizes, rank):
    """Clip requested bond ranks to ``min(prod(n[:k]), prod(n[k:]))``."""
    d = len(mode_sizes)
    if np.isscalar(rank):
        rank = [1] + [int(rank)] * (d - 1) + [1]
    rank = list(rank)
    if len(rank) != d + 1:
        raise ValueError("rank sequence must have length d + 1")
    out = [1] * (d + 1)
    for k in range(1, d):
        left = math.prod(mode_sizes[:k])
        right = math.prod(mode_sizes[k:])
        out[k] = max(1, min(int(rank[k]), left, right))
    return tuple(out)


def from_rank_one(factors):
    """Rank-1 tensor ``X[i_1..i_d] = prod_k factors[k][i_k]``."""
    cores = []
    for f in factors:
        f = np.asarray(f, dtype=float).ravel()
        if f.size == 0:
            raise ValueError("factors must be nonempty")
        cores.append(f.reshape(1, -1, 1))
    return TtTensor(cores)


def zeros(mode_sizes):
    return TtTensor([np.zeros((1, n, 1)) for n in mode_sizes])


def ones(mode_sizes):
    return TtTensor([np.ones((1, n, 1)) for n in mode_sizes])


def random_tt(mode_sizes, rank, seed=None):
    """Gaussian random tensor with the requested (clipped) ranks."""
    if np.isscalar(rank) and rank < 1:
        raise ValueError("rank must be >= 1")
    rng = np.random.default_rng(seed)
    r = feasible_ranks(tuple(mode_sizes), rank)
    cores = []
    for k, n in enumerate(mode_sizes):
        c = rng.standard_normal((r[k], n, r[k + 1])) / math.sqrt(r[k] * n)
        cores.append(c)
    return TtTensor(cores)


def from_dense(A, rel_tol=0.0, max_rank=None):
    """TT-SVD of a dense array."""
    A = np.asarray(A, dtype=float)
    shape = A.shape
    d = len(shape)
    delta = rel_tol * np.linalg.norm(A) / math.sqrt(max(d - 1, 1))
    cores = []
    r = 1
    C = A.reshape(1, -1)
    for k in range(d - 1):
        C = C.reshape(r * shape[k], -1)
        U, S, V = svd_truncated(C, delta, max_rank)
        cores.append(U.reshape(r, shape[k], -1))
        r = U.shape[1]
        C = S[:, None] * V.T
    cores.append(C.reshape(r, shape[-1], 1))
    return TtTensor(cores)


# ------------------------------------------------------------- evaluation

def element(X, index):
    """Single entry, computed as a product of core slices."""
    index = tuple(int(i) for i in index)
    if len(index) != X.d:
        raise IndexOutOfRange("index length differs from tensor order")
    v = np.ones((1, 1))
    for c, i in zip(X.cores, index):
        if not 0 <= i < c.shape[1]:
            raise IndexOutOfRange(f"index {index} outside {X.mode_sizes}")
        v = v @ c[:, i, :]
    return float(v[0, 0])


def to_dense(X, max_entries=DENSE_LIMIT):
    """Materialize a tensor (ndarray of mode sizes) or operator (2D matrix)."""
    if isinstance(X, TtOperator):
        nr, nc = math.prod(X.row_sizes), math.prod(X.col_sizes)
        if nr * nc > max_entries:
            raise TooLarge(f"{nr}x{nc} operator exceeds {max_entries} entries")
        res = np.ones((1, 1, 1))
        for c in X.cores:
            a, b, _ = res.shape
            res = np.einsum("abr,rijs->aibjs", res, c)
            res = res.reshape(a * c.shape[1], b * c.shape[2], c.shape[3])
        return res[:, :, 0]
    size = math.prod(X.mode_sizes)
    if size > max_entries:
        raise TooLarge(f"tensor with {size} entries exceeds {max_entries}")
    res = np.ones((1, 1))
    for c in X.cores:
        r, n, s = c.shape
        res = (res @ c.reshape(r, n * s)).reshape(-1, s)
    return res.reshape(X.mode_sizes)


# ------------------------------------------------------------- arithmetic

def _check_same_shape(X, Y):
    if X.mode_sizes != Y.mode_sizes:
        raise ShapeMismatch(f"{X.mode_sizes} vs {Y.mode_sizes}")


def scale(X, alpha):
    cores = list(X.cores)
    cores[0] = cores[0] * float(alpha)
    return TtTensor(cores)


def add_scaled(a, X, b, Y):
    """Exact ``a*X + b*Y``; interior ranks add, nothing is rounded."""
    _check_same_shape(X, Y)
    d = X.d
    if d == 1:
        return TtTensor([a * X.cores[0] + b * Y.cores[0]])
    cores = []
    for k, (x, y) in enumerate(zip(X.cores, Y.cores)):
        if k == 0:
            cores.append(np.concatenate([a * x, b * y], axis=2))
        elif k == d - 1:
            cores.append(np.concatenate([x, y], axis=0))
        else:
            rx, n, sx = x.shape
            ry, _, sy = y.shape
            z = np.zeros((rx + ry, n, sx + sy))
            z[:rx, :, :sx] = x
            z[rx:, :, sx:] = y
            cores.append(z)
    return TtTensor(cores)


def linear_combination(coeffs, tensors):
    """Exact ``sum_j coeffs[j] * tensors[j]`` in one block-structured pass."""
    tensors = list(tensors)
    coeffs = np.asarray(coeffs, dtype=float)
    for t in tensors[1:]:
        _check_same_shape(tensors[0], t)
    d = tensors[0].d
    if d == 1:
        return TtTensor([sum(c * t.cores[0] for c, t in zip(coeffs, tensors))])
    cores = []
    for k in range(d):
        parts = [t.cores[k] for t in tensors]
        if k == 0:
            cores.append(np.concatenate([c * p for c, p in zip(coeffs, parts)], axis=2))
        elif k == d - 1:
            cores.append(np.concatenate(parts, axis=0))
        else:
            rs = [p.shape[0] for p in parts]
            ss = [p.shape[2] for p in parts]
            z = np.zeros((sum(rs), parts[0].shape[1], sum(ss)))
            i = j = 0
            for p, r, s in zip(parts, rs, ss):
                z[i:i + r, :, j:j + s] = p
                i += r
                j += s
            cores.append(z)
    return TtTensor(cores)


def inner(X, Y):
    """Euclidean inner product, contracted core by core."""
    _check_same_shape(X, Y)
    v = np.ones((1, 1))
    for x, y in zip(X.cores, Y.cores):
        t = np.tensordot(v, x, axes=(0, 0))          # (ry, n, rx')
        v = np.tensordot(t, y, axes=([0, 1], [0, 1]))  # (rx', ry')
    return float(v[0, 0])


def norm(X):
    return math.sqrt(max(inner(X, X), 0.0))


def orthogonalize(X, direction="left"):
    """Return an equal tensor whose cores are left- or right-orthonormal.

    ``left``: cores ``1..d-1`` have orthonormal columns in their
    ``(r_{k-1} n_k, r_k)`` unfolding and the norm sits in the last core.
    ``right`` is the mirror image, with the norm in the first core.
    """
    cores = [np.array(c) for c in X.cores]
    d = len(cores)
    if direction == "left":
        for k in range(d - 1):
            r, n, s = cores[k].shape
            Q, R = qr_factor(cores[k].reshape(r * n, s))
            cores[k] = Q.reshape(r, n, -1)
            cores[k + 1] = np.tensordot(R, cores[k + 1], axes=(1, 0))
    elif direction == "right":
        for k in range(d - 1, 0, -1):
            r, n, s = cores[k].shape
            Q, R = qr_factor(cores[k].reshape(r, n * s).T)
            cores[k] = Q.T.reshape(-1, n, s)
            cores[k - 1] = np.tensordot(cores[k - 1], R.T, axes=(2, 0))
    else:
        raise ValueError("direction must be 'left' or 'right'")
    return TtTensor(cores)


def _round_cores(cores, rel_tol, max_rank):
    """Rounding on a list of 3D cores; returns (new cores, norm)."""
    cores = [np.array(c) for c in cores]
    d = len(cores)
    for k in range(d - 1, 0, -1):
        r, n, s = cores[k].shape
        Q, R = qr_factor(cores[k].reshape(r, n * s).T)
        cores[k] = Q.T.reshape(-1, n, s)
        cores[k - 1] = np.tensordot(cores[k - 1], R.T, axes=(2, 0))
    nrm = float(np.linalg.norm(cores[0]))
    if d == 1:
        return cores, nrm
    delta = rel_tol * nrm / math.sqrt(d - 1)
    for k in range(d - 1):
        r, n, s = cores[k].shape
        U, S, V = svd_truncated(cores[k].reshape(r * n, s), delta, max_rank)
        cores[k] = U.reshape(r, n, -1)
        cores[k + 1] = np.tensordot(S[:, None] * V.T, cores[k + 1], axes=(1, 0))
    return cores, nrm


def tt_round(X, rel_tol=1e-14, max_rank=None):
    """Rank reduction with ``||round(X) - X|| <= rel_tol * ||X||``.

    Right-to-left QR sweep followed by a left-to-right truncated SVD sweep
    with per-bond tolerance ``rel_tol * ||X|| / sqrt(d - 1)``.  When
    ``max_rank`` binds the error bound no longer applies but the ranks are
    capped.
    """
    if rel_tol < 0:
        raise ValueError("rel_tol must be nonnegative")
    cores, _ = _round_cores(X.cores, rel_tol, max_rank)
    return TtTensor(cores)


def stable_norm(X):
    """Norm computed from an orthogonalized representation.

    Unlike ``norm`` this does not square the cancellation error, so it is
    the right tool for residual-type tensors ``Y - lambda*X``.
    """
    cores = [np.array(c) for c in X.cores]
    for k in range(len(cores) - 1, 0, -1):
        r, n, s = cores[k].shape
        _, R = qr_factor(cores[k].reshape(r, n * s).T)
        cores[k - 1] = np.tensordot(cores[k - 1], R.T, axes=(2, 0))
    return float(np.linalg.norm(cores[0]))


def pad_ranks(X, ranks):
    """Zero-pad bond dimensions up to ``ranks``; the tensor is unchanged."""
    cores = []
    for k, c in enumerate(X.cores):
        r, n, s = c.shape
        z = np.zeros((ranks[k], n, ranks[k + 1]))
        z[:r, :, :s] = c
        cores.append(z)
    return TtTensor(cores)


def enlarge_rank(X, rank, seed=None, rel_scale=1e-8):
    """Add a tiny random component so that interior ranks reach ``rank``.

    Used to lift a low-rank initial guess to the working rank of a
    fixed-rank solver without changing it appreciably.
    """
    target = feasible_ranks(X.mode_sizes, rank)
    extra = [max(t - r, 0) for t, r in zip(target, X.ranks)]
    if max(extra[1:-1], default=0) == 0:
        return X
    fill = [1] + [max(e, 1) for e in extra[1:-1]] + [1]
    Z = random_tt(X.mode_sizes, fill, seed)
    nx = stable_norm(X)
    eps = rel_scale * (nx if nx > 0 else 1.0) / max(norm(Z), 1e-300)
    return tt_round(add_scaled(1.0, X, eps, Z), 0.0, rank)


# --------------------------------------------------------------- operators

def matvec(H, X):
    """Exact ``H(X)``; interior ranks multiply."""
    if H.col_sizes != X.mode_sizes:
        raise ShapeMismatch(f"operator columns {H.col_sizes} vs tensor {X.mode_sizes}")
    cores = []
    for h, x in zip(H.cores, X.cores):
        A, n, m, B = h.shape
        a, _, b = x.shape
        y = np.tensordot(h, x, axes=(2, 1))          # (A, n, B, a, b)
        y = y.transpose(0, 3, 1, 2, 4).reshape(A * a, n, B * b)
        cores.append(y)
    return TtTensor(cores)


def matvec_rounded(H, X, rel_tol=1e-14, max_rank=None):
    return tt_round(matvec(H, X), rel_tol, max_rank)


def op_identity(sizes):
    return TtOperator([np.eye(n).reshape(1, n, n, 1) for n in sizes])


def op_from_kron(mats):
    """Rank-1 operator ``mats[0] (x) mats[1] (x) ...``."""
    return TtOperator([np.asarray(m, dtype=float)[None, :, :, None] for m in mats])


def op_diag(X):
    """Diagonal operator whose diagonal is the tensor ``X``."""
    cores = []
    for c in X.cores:
        r, n, s = c.shape
        z = np.zeros((r, n, n, s))
        idx = np.arange(n)
        z[:, idx, idx, :] = c
        cores.append(z)
    return TtOperator(cores)


def _check_op_shape(A, B):
    if A.row_sizes != B.row_sizes or A.col_sizes != B.col_sizes:
        raise ShapeMismatch("operator shapes differ")


def op_scale(A, alpha):
    cores = list(A.cores)
    cores[0] = cores[0] * float(alpha)
    return TtOperator(cores)


def _op_as_tensor(A):
    return [c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3]) for c in A.cores]


def _tensor_as_op(cores, A):
    return TtOperator([c.reshape(c.shape[0], n, m, c.shape[2])
                       for c, n, m in zip(cores, A.row_sizes, A.col_sizes)])


def op_add(A, B, alpha=1.0, beta=1.0):
    """Exact ``alpha*A + beta*B`` with summed ranks."""
    _check_op_shape(A, B)
    X = add_scaled(alpha, TtTensor(_op_as_tensor(A)), beta, TtTensor(_op_as_tensor(B)))
    return _tensor_as_op(X.cores, A)


def op_round(A, rel_tol=1e-14, max_rank=None):
    """Round an operator as a tensor over fused ``(i_k, j_k)`` modes."""
    cores, _ = _round_cores(_op_as_tensor(A), rel_tol, max_rank)
    return _tensor_as_op(cores, A)


def op_add_rounded(A, B, rel_tol=1e-14, max_rank=None):
    return op_round(op_add(A, B), rel_tol, max_rank)


def op_matmul(A, B):
    """Operator product ``A B`` with ranks ``R_A * R_B``."""
    if A.col_sizes != B.row_sizes:
        raise ShapeMismatch("inner operator sizes differ")
    cores = []
    for a, b in zip(A.cores, B.cores):
        P, n, m, Q = a.shape
        S, _, k, T = b.shape
        c = np.einsum("pimq,smkt->psikqt", a, b)
        cores.append(c.reshape(P * S, n, k, Q * T))
    return TtOperator(cores)


def op_shift(H, sigma):
    """``H - sigma * I`` as an exact TT operator."""
    if sigma == 0:
        return H
    return op_add(H, op_identity(H.row_sizes), 1.0, -float(sigma))
