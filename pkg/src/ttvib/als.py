"""Fixed-rank ALS solution of shifted linear systems ``(H - sigma I) X = F``.

Each core update solves a small dense system on the vectorized core while
the other cores, kept orthonormal, act as a frame.  Two local
formulations are available:

``galerkin``
    ``P^T (H - sigma I) P x = P^T f`` -- the stationarity condition of the
    energy functional; well posed near an eigenvector even though
    ``H - sigma I`` is indefinite.
``normal_equations``
    ``P^T (H - sigma I)^2 P x = P^T (H - sigma I) f`` -- minimizes the
    residual norm over the core, so the residual never increases.

``P`` is the frame ``X^{<p} (x) I (x) X^{>p}``; it is never formed.
"""

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse.linalg as spla

from .errors import LocalSolveFailure, ShapeMismatch
from .tt import (TtTensor, enlarge_rank, matvec, op_matmul, orthogonalize,
                 stable_norm, tt_round, zeros)
from .dense import qr_factor

FORMULATIONS = ("galerkin", "normal_equations")
LOCAL_SOLVERS = ("auto", "direct", "iterative")


@dataclass(frozen=True)
class AlsOptions:
    n_swp: int = 2
    formulation: str = "galerkin"
    local_solver: str = "auto"
    local_tol: float = 1e-2
    local_max_iter: int = 25
    max_rank: int = None
    direct_limit: int = 2500

    def __post_init__(self):
        if self.n_swp < 1:
            raise ValueError("n_swp must be >= 1")
        if self.local_tol <= 0:
            raise ValueError("local_tol must be positive")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")
        if self.local_solver not in LOCAL_SOLVERS:
            raise ValueError(f"local_solver must be one of {LOCAL_SOLVERS}")


# ------------------------------------------------------------- interfaces

def _op_left(phi, x, h):
    # phi (a, A, a'), x (a, i, c), h (A, i, j, B) -> (c, B, c')
    t = np.tensordot(phi, x, axes=(0, 0))               # A a' i c
    t = np.tensordot(t, h, axes=([0, 2], [0, 1]))       # a' c j B
    return np.tensordot(t, x, axes=([0, 2], [0, 1]))    # c B c'


def _op_right(phi, x, h):
    # phi (c, B, c') -> (a, A, a')
    t = np.tensordot(x, phi, axes=(2, 0))               # a i B c'
    t = np.tensordot(t, h, axes=([1, 2], [1, 3]))       # a c' A j
    return np.tensordot(t, x, axes=([1, 3], [2, 1]))    # a A a'


def _vec_left(psi, x, f):
    # psi (a, b), x (a, i, c), f (b, i, d) -> (c, d)
    t = np.tensordot(psi, x, axes=(0, 0))               # b i c
    return np.tensordot(t, f, axes=([0, 1], [0, 1]))    # c d


def _vec_right(psi, x, f):
    # psi (c, d) -> (a, b)
    t = np.tensordot(x, psi, axes=(2, 0))               # a i d
    return np.tensordot(t, f, axes=([1, 2], [1, 2]))    # a b


def _local_apply(phil, h, phir, core):
    t = np.tensordot(phil, core, axes=(2, 0))           # a A j c'
    t = np.tensordot(t, h, axes=([1, 2], [0, 2]))       # a c' i B
    t = np.tensordot(t, phir, axes=([1, 3], [2, 1]))    # a i c
    return t


def _local_matrix(phil, h, phir):
    t = np.tensordot(phil, h, axes=(1, 0))              # a x i j B
    t = np.tensordot(t, phir, axes=(4, 1))              # a x i j c y
    a, x, i, j, c, y = t.shape
    return t.transpose(0, 2, 4, 1, 3, 5).reshape(a * i * c, x * j * y)


def _local_rhs(psil, f, psir):
    t = np.tensordot(psil, f, axes=(1, 0))              # a i d
    return np.tensordot(t, psir, axes=(2, 1))           # a i c


def local_galerkin_matvec(H, sigma, X, p, core):
    """Apply the projected operator ``P^T (H - sigma I) P`` to a core.

    ``X`` supplies the frames: cores before ``p`` must be left-orthonormal
    and cores after ``p`` right-orthonormal.  ``core`` has the shape of
    ``X.cores[p]``.
    """
    phil = np.ones((1, 1, 1))
    for k in range(p):
        phil = _op_left(phil, X.cores[k], H.cores[k])
    phir = np.ones((1, 1, 1))
    for k in range(X.d - 1, p, -1):
        phir = _op_right(phir, X.cores[k], H.cores[k])
    core = np.asarray(core, dtype=float)
    return _local_apply(phil, H.cores[p], phir, core) - sigma * core


# ------------------------------------------------------------------ solver

@lru_cache(maxsize=4)
def _squared(H):
    return op_matmul(H, H)


class _System:
    """Operator terms and right-hand-side terms of one local formulation."""

    def __init__(self, H, sigma, F, formulation):
        if formulation == "galerkin":
            self.ops = [(H, 1.0)]
            self.ident = -sigma
            self.rhs = [(F, 1.0)]
        else:
            self.ops = [(_squared(H), 1.0), (H, -2.0 * sigma)]
            self.ident = sigma * sigma
            self.rhs = [(matvec(H, F), 1.0), (F, -sigma)]
        self.symmetric_definite = formulation == "normal_equations"


def _solve_local(system, phil, phir, psil, psir, p, x0, opts):
    shape = x0.shape
    size = x0.size
    f = sum(c * _local_rhs(pl[p], t.cores[p], pr[p])
            for (t, c), pl, pr in zip(system.rhs, psil, psir)).ravel()
    method = opts.local_solver
    if method == "auto":
        method = "direct" if size <= opts.direct_limit else "iterative"
    if method == "direct":
        M = system.ident * np.eye(size)
        for (op, c), pl, pr in zip(system.ops, phil, phir):
            M += c * _local_matrix(pl[p], op.cores[p], pr[p])
        try:
            # np.linalg.solve has no condition-number warning, which keeps
            # this quiet and thread-safe for parallel clusters
            with np.errstate(all="ignore"):
                x = np.linalg.solve(M, f)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise LocalSolveFailure(f"singular local system at core {p}: {exc}") from None
    else:
        def mv(v):
            v = v.reshape(shape)
            out = system.ident * v
            for (op, c), pl, pr in zip(system.ops, phil, phir):
                out = out + c * _local_apply(pl[p], op.cores[p], pr[p], v)
            return out.ravel()

        A = spla.LinearOperator((size, size), matvec=mv, dtype=float)
        krylov = spla.cg if system.symmetric_definite else spla.minres
        x, _ = krylov(A, f, x0=x0.ravel(), rtol=opts.local_tol,
                      maxiter=opts.local_max_iter)
    if not np.all(np.isfinite(x)):
        raise LocalSolveFailure(f"non-finite local solution at core {p}")
    return x.reshape(shape)


def _als(H, sigma, F, X0, opts, formulation):
    system = _System(H, sigma, F, formulation)
    cores = [np.array(c) for c in orthogonalize(X0, "right").cores]
    d = len(cores)
    nops, nrhs = len(system.ops), len(system.rhs)
    phil = [[None] * d for _ in range(nops)]
    phir = [[None] * d for _ in range(nops)]
    psil = [[None] * d for _ in range(nrhs)]
    psir = [[None] * d for _ in range(nrhs)]
    for t in range(nops):
        phil[t][0] = np.ones((1, 1, 1))
        phir[t][d - 1] = np.ones((1, 1, 1))
    for t in range(nrhs):
        psil[t][0] = np.ones((1, 1))
        psir[t][d - 1] = np.ones((1, 1))

    def update_right(k):
        # interfaces right of core k-1, built from core k
        for t, (op, _) in enumerate(system.ops):
            phir[t][k - 1] = _op_right(phir[t][k], cores[k], op.cores[k])
        for t, (vec, _) in enumerate(system.rhs):
            psir[t][k - 1] = _vec_right(psir[t][k], cores[k], vec.cores[k])

    def update_left(k):
        for t, (op, _) in enumerate(system.ops):
            phil[t][k + 1] = _op_left(phil[t][k], cores[k], op.cores[k])
        for t, (vec, _) in enumerate(system.rhs):
            psil[t][k + 1] = _vec_left(psil[t][k], cores[k], vec.cores[k])

    for k in range(d - 1, 0, -1):
        update_right(k)

    def solve(p):
        cores[p] = _solve_local(system, phil, phir, psil, psir, p, cores[p], opts)

    def move_right(p):
        r, n, s = cores[p].shape
        Q, R = qr_factor(cores[p].reshape(r * n, s))
        cores[p] = Q.reshape(r, n, -1)
        cores[p + 1] = np.tensordot(R, cores[p + 1], axes=(1, 0))
        update_left(p)

    def move_left(p):
        r, n, s = cores[p].shape
        Q, R = qr_factor(cores[p].reshape(r, n * s).T)
        cores[p] = Q.T.reshape(-1, n, s)
        cores[p - 1] = np.tensordot(cores[p - 1], R.T, axes=(2, 0))
        update_right(p)

    solve(0)
    for _ in range(opts.n_swp):
        for p in range(1, d):
            move_right(p - 1)
            solve(p)
        for p in range(d - 2, -1, -1):
            move_left(p + 1)
            solve(p)
    return TtTensor(cores)


def als_solve(H, sigma, F, X0, opts=None):
    """Approximately solve ``(H - sigma I) X = F`` on the rank manifold of ``X0``.

    Runs ``opts.n_swp`` sweep pairs (left-to-right then right-to-left) of
    single-core updates starting from ``X0``; the ranks of the result are
    those of ``X0`` after orthogonalization.  A singular Galerkin local
    system triggers one retry with the normal-equation formulation.
    """
    opts = opts or AlsOptions()
    if H.col_sizes != F.mode_sizes or H.row_sizes != F.mode_sizes:
        raise ShapeMismatch("operator, right-hand side and guess must share sizes")
    if X0.mode_sizes != F.mode_sizes:
        raise ShapeMismatch("initial guess has the wrong mode sizes")
    if opts.max_rank is not None and max(X0.ranks) > opts.max_rank:
        X0 = tt_round(X0, 0.0, opts.max_rank)
    try:
        return _als(H, float(sigma), F, X0, opts, opts.formulation)
    except LocalSolveFailure:
        if opts.formulation != "galerkin":
            raise
        return _als(H, float(sigma), F, X0, opts, "normal_equations")


def apply_manifold_preconditioner(H, sigma, R, rank, opts=None, positive_definite=False,
                                  seed=0):
    """Retract ``(H - sigma I)^{-1} R`` onto the rank-``rank`` manifold.

    The initial guess is ``R`` truncated to ``rank`` (topped up with a tiny
    random component if ``R`` has lower rank).  When the shifted operator
    is declared positive definite the energy functional is minimized
    (Galerkin local systems); otherwise the residual norm is.
    """
    opts = opts or AlsOptions()
    if stable_norm(R) == 0.0:
        return zeros(R.mode_sizes)
    X0 = enlarge_rank(tt_round(R, 0.0, rank), rank, seed)
    formulation = "galerkin" if positive_definite else "normal_equations"
    opts = replace(opts, formulation=formulation, max_rank=rank)
    return als_solve(H, sigma, R, X0, opts)
