"""Cross approximation of elementwise functions of TT tensors.

``multifuncrs`` builds ``Y = f(X_1, ..., X_P)`` (``f`` applied entry by
entry) from a few sampled entries.  Each directional pass visits the
cores in order; core ``k`` is sampled on the fibers
``(J_<k, :, J_>k)`` where ``J_<k`` and ``J_>k`` are index sets selected by
maxvol.  A sampled core is turned into an interpolation core
``Q inv(Q[idx])`` and its rows ``idx`` become the next index set.  Two
random columns are appended before the QR so that the index sets can
move towards directions the current iterate does not yet see; the extra
rank is rounded away at the end of the pass.

``block_matvec`` forms ``Y_i = sum_j M_ij X_j`` either by adding and
rounding term by term or, for long blocks, with ``multifuncrs``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .blockvector import BlockVector
from .dense import maxvol
from .errors import NoConvergence, ShapeMismatch
from .tt import (TtTensor, add_scaled, feasible_ranks, orthogonalize, random_tt, scale,
                 stable_norm, tt_round)

MAX_SWEEPS = 20
ENRICHMENT = 2
DIRECT_LIMIT = 20
ALS_SWEEPS = 2


@dataclass
class CrossResult:
    tensor: TtTensor
    converged: bool
    sweeps: int
    evaluations: list
    """Number of sampled entries in each directional pass."""
    rel_change: float


# ------------------------------------------------------------ index sets
#
# Index sets are nested, so each one is stored as the step that extends
# its neighbour: a left set at bond k+1 is a pair of arrays (rows of the
# set at bond k, mode-k indices); a right set at bond k is (mode-k
# indices, rows of the set at bond k+1).

def _orth_basis(M):
    """Orthonormal basis of the numerical column space (at least one column)."""
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    keep = max(1, int(np.sum(s > 1e-14 * max(s[0], 1e-300)))) if s.size else 1
    return U[:, :keep]


def _left_steps(cores):
    """Left index sets chosen by maxvol on a left-to-right pass over ``cores``."""
    steps = [None]
    c = cores[0]
    for k in range(len(cores) - 1):
        s, n, r = c.shape
        M = c.reshape(s * n, r)
        idx = maxvol(_orth_basis(M))
        steps.append(np.divmod(idx, n))
        c = np.tensordot(M[idx], cores[k + 1], axes=(1, 0))
    return steps


def _right_steps(cores):
    """Mirror of ``_left_steps``; entry ``k`` is the right set at bond ``k``."""
    d = len(cores)
    steps = [None] * (d + 1)
    c = cores[d - 1]
    for k in range(d - 1, 0, -1):
        r, n, s = c.shape
        M = c.reshape(r, n * s).T
        idx = maxvol(_orth_basis(M))
        steps[k] = np.divmod(idx, s)
        c = np.tensordot(cores[k - 1], M[idx].T, axes=(2, 0))
    return steps


# ----------------------------------------------------------- interfaces

def _stack(tensors):
    ranks = [max(r) for r in zip(*(t.ranks for t in tensors))]
    stacked = []
    for k in range(tensors[0].d):
        n = tensors[0].mode_sizes[k]
        z = np.zeros((len(tensors), ranks[k], n, ranks[k + 1]))
        for p, t in enumerate(tensors):
            c = t.cores[k]
            z[p, :c.shape[0], :, :c.shape[2]] = c
        stacked.append(z)
    return stacked


def _extend_left(Li, core, step):
    # Li (P, s, a) -> (P, s', b) for the rows (parent, i) of the next set
    a_idx, i_idx = step
    sub = core[:, :, i_idx, :].transpose(0, 2, 1, 3)        # P s' a b
    return np.matmul(Li[:, a_idx, None, :], sub)[:, :, 0, :]


def _extend_right(Ri, core, step):
    # Ri (P, t, b) -> (P, t', a)
    i_idx, b_idx = step
    sub = core[:, :, i_idx, :].transpose(0, 2, 1, 3)        # P t' a b
    return np.matmul(sub, Ri[:, b_idx, :, None])[:, :, :, 0]


def _right_interfaces(stacked, steps):
    d = len(stacked)
    out = [None] * (d + 1)
    out[d] = np.ones((stacked[0].shape[0], 1, 1))
    for k in range(d - 1, 0, -1):
        out[k] = _extend_right(out[k + 1], stacked[k], steps[k])
    return out


def _left_interfaces(stacked, steps):
    d = len(stacked)
    out = [np.ones((stacked[0].shape[0], 1, 1))]
    for k in range(d - 1):
        out.append(_extend_left(out[k], stacked[k], steps[k + 1]))
    return out


def _sample(f, core, Li, Ri):
    """Evaluate ``f`` on the fibers between left and right interfaces."""
    P, a, n, b = core.shape
    s, t = Li.shape[1], Ri.shape[1]
    vals = np.matmul(Li, core.reshape(P, a, n * b)).reshape(P, s * n, b)
    vals = np.matmul(vals, Ri.transpose(0, 2, 1))            # P, s*n, t
    out = np.asarray(f(vals.reshape(P, -1)), dtype=float)
    if out.shape != (s * n * t,):
        raise ValueError("f must map a (k, N) array to an (N,) array")
    return out.reshape(s, n, t)


# ----------------------------------------------------------------- passes

def _pass_forward(f, stacked, right_steps, rng):
    d = len(stacked)
    Ri = _right_interfaces(stacked, right_steps)
    Li = np.ones((stacked[0].shape[0], 1, 1))
    cores, count = [], 0
    for k in range(d):
        C = _sample(f, stacked[k], Li, Ri[k + 1])
        count += C.size
        if k == d - 1:
            cores.append(C)
            break
        s, n, t = C.shape
        M = C.reshape(s * n, t)
        A = np.hstack([M, rng.standard_normal((s * n, ENRICHMENT))])
        Q, _ = np.linalg.qr(A[:, :min(s * n, t + ENRICHMENT)])
        idx = maxvol(Q)
        cores.append((Q @ np.linalg.inv(Q[idx])).reshape(s, n, -1))
        Li = _extend_left(Li, stacked[k], np.divmod(idx, n))
    return TtTensor(cores), count


def _pass_backward(f, stacked, left_steps, rng):
    d = len(stacked)
    Li = _left_interfaces(stacked, left_steps)
    Ri = np.ones((stacked[0].shape[0], 1, 1))
    cores, count = [None] * d, 0
    for k in range(d - 1, -1, -1):
        C = _sample(f, stacked[k], Li[k], Ri)
        count += C.size
        if k == 0:
            cores[0] = C
            break
        s, n, t = C.shape
        M = C.reshape(s, n * t).T
        A = np.hstack([M, rng.standard_normal((n * t, ENRICHMENT))])
        Q, _ = np.linalg.qr(A[:, :min(n * t, s + ENRICHMENT)])
        idx = maxvol(Q)
        cores[k] = (Q @ np.linalg.inv(Q[idx])).T.reshape(-1, n, t)
        Ri = _extend_right(Ri, stacked[k], np.divmod(idx, t))
    return TtTensor(cores), count


def cross_approx(inputs, f, target_rank, rel_tol=1e-10, x0=None, seed=0,
                 max_sweeps=MAX_SWEEPS):
    """Cross approximation of ``f`` applied entrywise to ``inputs``.

    Parameters
    ----------
    inputs : sequence of TtTensor
        Tensors sharing mode sizes.
    f : callable
        Receives an array of shape ``(len(inputs), N)`` of input entries and
        returns the ``N`` output entries.
    target_rank : int
        Rank cap of the result.
    rel_tol : float
        Stop when ``||Y_new - Y_old|| <= rel_tol * ||Y_new||`` between passes.
    x0 : TtTensor, optional
        Initial guess used to seed the index sets; random by default.

    Returns
    -------
    CrossResult
    """
    inputs = list(inputs)
    if not inputs:
        raise ValueError("need at least one input tensor")
    sizes = inputs[0].mode_sizes
    for t in inputs:
        if t.mode_sizes != sizes:
            raise ShapeMismatch("all inputs must share mode sizes")
    if x0 is not None and x0.mode_sizes != sizes:
        raise ShapeMismatch("initial guess has the wrong mode sizes")
    target_rank = int(target_rank)
    if target_rank < 1:
        raise ValueError("target_rank must be >= 1")
    rng = np.random.default_rng(seed)
    stacked = _stack(inputs)
    if len(sizes) == 1:
        vals = f(stacked[0][:, 0, :, 0])
        Y = TtTensor([np.asarray(vals, dtype=float).reshape(1, -1, 1)])
        return CrossResult(Y, True, 1, [sizes[0]], 0.0)

    if x0 is None:
        x0 = random_tt(sizes, target_rank, seed)
    else:
        x0 = tt_round(x0, 0.0, target_rank)
    steps = _right_steps(x0.cores)
    Y_old, change, counts = None, np.inf, []
    forward = True
    for sweep in range(1, max_sweeps + 1):
        if forward:
            Y, count = _pass_forward(f, stacked, steps, rng)
        else:
            Y, count = _pass_backward(f, stacked, steps, rng)
        counts.append(count)
        Y = tt_round(Y, 1e-14, target_rank)
        forward = not forward
        steps = _right_steps(Y.cores) if forward else _left_steps(Y.cores)
        if Y_old is not None:
            ny = stable_norm(Y)
            diff = stable_norm(add_scaled(1.0, Y, -1.0, Y_old))
            change = diff / ny if ny > 0 else diff
            if change <= rel_tol:
                return CrossResult(Y, True, sweep, counts, change)
        Y_old = Y
    converged = change <= 10 * rel_tol
    if not converged:
        warnings.warn(f"cross approximation stalled at relative change {change:.2e}",
                      NoConvergence, stacklevel=2)
    return CrossResult(Y_old, converged, max_sweeps, counts, change)


def multifuncrs(inputs, f, target_rank, rel_tol=1e-10, x0=None, seed=0):
    """``f(X_1, ..., X_P)`` entrywise as a TT tensor of rank ``<= target_rank``."""
    return cross_approx(inputs, f, target_rank, rel_tol, x0, seed).tensor


# ----------------------------------------------------------- block matvec

def _right_env(R, y, x):
    # R (P, b, f); y (a, j, b); x (P, e, j, f) -> (P, a, e)
    t = np.matmul(x.reshape(x.shape[0], -1, x.shape[3]), R.transpose(0, 2, 1))  # P, e*j, b
    t = t.reshape(x.shape[0], x.shape[1], -1)                                     # P e (j b)
    return np.matmul(t, y.reshape(y.shape[0], -1).T).transpose(0, 2, 1)

def _left_env(L, y, x):
    # L (P, a, c); y (a, i, a'); x (P, c, i, c') -> (P, a', c')
    P = x.shape[0]
    t = np.matmul(L, x.reshape(P, x.shape[1], -1)).reshape(P, -1, x.shape[3])    # P (a i) c'
    return np.matmul(y.reshape(-1, y.shape[2]).T[None], t)

def _als_combination(members, w, rank, sweeps=ALS_SWEEPS):
    """Fit ``sum_p w_p X_p`` at rank ``<= rank`` by two-site ALS sweeps.

    Each step forms the exact projection of the sum onto the current left
    and right frames and truncates it by SVD, so only ``O(P d n^2 r^3)``
    work is done and the full-rank sum is never built.
    """
    xs = _stack(members)
    P, d = len(members), len(xs)
    w = np.asarray(w, float)
    j = int(np.argmax(np.abs(w) * np.array([stable_norm(m) for m in members])))
    y = [np.array(c) for c in orthogonalize(members[j], "right").cores]
    R = [None] * (d + 1)
    R[d] = np.ones((P, 1, 1))
    for k in range(d - 1, 0, -1):
        R[k] = _right_env(R[k + 1], y[k], xs[k])
    L = [None] * (d + 1)
    L[0] = np.ones((P, 1, 1))
    def supercore(k):
        Lw = L[k] * w[:, None, None]
        t = np.matmul(Lw, xs[k].reshape(P, xs[k].shape[1], -1))   # P a (i e)
        a = t.shape[1]; n1 = xs[k].shape[2]
        t = t.reshape(P, a * n1, -1)
        t = np.matmul(t, xs[k + 1].reshape(P, xs[k + 1].shape[1], -1))  # P (a i) (j f)
        n2 = xs[k + 1].shape[2]
        t = t.reshape(P, a * n1 * n2, -1)
        t = np.matmul(t, R[k + 2].transpose(0, 2, 1))              # P (a i j) b
        return t.sum(0).reshape(a * n1, n2 * R[k + 2].shape[1]), a, n1, n2
    for _ in range(sweeps):
        for k in range(d - 1):
            S, a, n1, n2 = supercore(k)
            U, sv, Vt = np.linalg.svd(S, full_matrices=False)
            r = max(1, min(rank, int(np.sum(sv > 1e-14 * sv[0]))))
            y[k] = U[:, :r].reshape(a, n1, r)
            y[k + 1] = (sv[:r, None] * Vt[:r]).reshape(r, n2, -1)
            L[k + 1] = _left_env(L[k], y[k], xs[k])
        for k in range(d - 2, -1, -1):
            S, a, n1, n2 = supercore(k)
            U, sv, Vt = np.linalg.svd(S, full_matrices=False)
            r = max(1, min(rank, int(np.sum(sv > 1e-14 * sv[0]))))
            y[k] = (U[:, :r] * sv[:r]).reshape(a, n1, r)
            y[k + 1] = Vt[:r].reshape(r, n2, -1)
            R[k + 1] = _right_env(R[k + 2], y[k + 1], xs[k + 1])
    return TtTensor(y)



def _direct_combination(members, coeffs, rel_tol, max_rank):
    acc = None
    for c, X in zip(coeffs, members):
        if c == 0.0:
            continue
        acc = scale(X, c) if acc is None else tt_round(add_scaled(1.0, acc, c, X), rel_tol)
    if acc is None:
        acc = scale(members[0], 0.0)
    return tt_round(acc, rel_tol, max_rank)


def block_matvec(X, M, max_rank=None, rel_tol=1e-12, method="auto", cross_tol=1e-10,
                 seed=0):
    """Block product ``Y_i = sum_j M[i, j] X_j``.

    Parameters
    ----------
    X : BlockVector
        ``P`` members.
    M : array_like, shape (P_out, P)
    max_rank : int, optional
        Rank cap of every output member; defaults to ``X.max_rank``.
    method : {'auto', 'direct', 'cross', 'als'}
        ``auto`` adds and rounds term by term when ``P < 20`` and uses cross
        approximation otherwise.  ``als`` fits each output at the rank cap
        by two-site ALS sweeps and is the most accurate choice when that cap
        is binding; without a cap it behaves like ``auto``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    P = len(X)
    if M.shape[1] != P:
        raise ShapeMismatch(f"matrix has {M.shape[1]} columns for {P} members")
    if method not in ("auto", "direct", "cross", "als"):
        raise ValueError("method must be 'auto', 'direct', 'cross' or 'als'")
    max_rank = X.max_rank if max_rank is None else max_rank
    if method == "als" and max_rank is None:
        method = "auto"
    if method == "auto":
        method = "direct" if P < DIRECT_LIMIT else "cross"
    members = list(X.members)
    out = []
    if method == "als":
        for row in M:
            out.append(_als_combination(members, row, int(max_rank)))
    elif method == "direct":
        for row in M:
            out.append(_direct_combination(members, row, rel_tol, max_rank))
    else:
        cap = max(feasible_ranks(X.mode_sizes, sum(max(m.ranks) for m in members)))
        target = cap if max_rank is None else min(int(max_rank), cap)
        for i, row in enumerate(M):
            res = cross_approx(members, lambda v, w=row: w @ v, target, cross_tol,
                               seed=seed + i)
            out.append(res.tensor)
    return BlockVector(out, X.max_rank)
