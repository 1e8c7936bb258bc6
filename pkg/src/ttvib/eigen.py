"""Low-rank block eigensolvers.

``mp_lobpcg``
    Block LOBPCG whose preconditioner is a few ALS sweeps for
    ``(H - sigma I) W = R`` on the fixed-rank manifold.  Converged members
    are deflated and the iteration restarts on the rest.
``mp_sii``
    Simultaneous inverse iteration with one constant shift per cluster of
    close eigenvalues; each step is an ALS solve followed by Cholesky-QR.
``pinvit``
    Preconditioned inverse iteration with a two-term Rayleigh-Ritz step per
    member; a simple baseline.
"""

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .als import AlsOptions, als_solve, apply_manifold_preconditioner
from .block import (BlockVector, block_matvec, block_qr, concat,
                    ortho_against, rayleigh_ritz, truncate_block)
from .container import payload_bytes
from .errors import ClusterDiverged, FullyDegenerateMass, NoConvergence
from .tt import (add_scaled, enlarge_rank, inner, matvec, matvec_rounded, scale,
                 stable_norm, tt_round)

RESIDUAL_ROUNDING = 1e-10
MAX_RESTARTS = 2
PRECONDITIONERS = ("residual", "energy")


@dataclass(frozen=True)
class SolverConfig:
    """Parameters shared by the eigensolvers.

    ``sigma`` is the preconditioner shift of LOBPCG and PINVIT (defaults to
    the lowest initial Ritz value); inverse iteration picks its own shift
    per cluster.
    """

    B: int
    rank: int
    sigma: float = None
    cluster_threshold: float = 1e-4
    max_iter: int = 30
    conv_tol: float = 1e-8
    als: AlsOptions = field(default_factory=AlsOptions)
    deflation: bool = True
    rank_increase_on_restart: int = 5
    preconditioner: str = "residual"
    block_method: str = "als"
    cross_tol: float = 1e-8
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.cluster_threshold <= 0:
            raise ValueError("cluster_threshold must be positive")
        if self.conv_tol <= 0:
            raise ValueError("conv_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}")
        if self.block_method not in ("auto", "direct", "cross", "als"):
            raise ValueError("block_method must be 'auto', 'direct', 'cross' or 'als'")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class HistoryRecord:
    stage: str
    iteration: int
    index: int
    eigenvalue: float
    residual: float


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    eigenvectors: BlockVector
    residuals: np.ndarray
    converged: np.ndarray
    history: list
    iterations: int
    wall_time: float
    storage_bytes: int

    @property
    def all_converged(self):
        return bool(np.all(self.converged))


class _History:
    def __init__(self, stage, sink):
        self.stage = stage
        self.sink = sink
        self.records = []

    def emit(self, iteration, values, residuals, indices=None):
        indices = range(len(values)) if indices is None else indices
        for i, v, r in zip(indices, values, residuals):
            rec = HistoryRecord(self.stage, int(iteration), int(i), float(v), float(r))
            self.records.append(rec)
            if self.sink is not None:
                self.sink(rec)


# ------------------------------------------------------------ diagnostics

def cluster_eigenvalues(E, delta):
    """Split ascending values into chains with ``|E_i - E_{i+1}| < delta |E_{i+1}|``.

    Returns a list of lists of 0-based indices.
    """
    E = np.asarray(E, dtype=float)
    if E.size == 0:
        return []
    if np.any(np.diff(E) < 0):
        raise ValueError("eigenvalues must be sorted ascending")
    clusters = [[0]]
    for i in range(1, E.size):
        if abs(E[i - 1] - E[i]) < delta * abs(E[i]):
            clusters[-1].append(i)
        else:
            clusters.append([i])
    return clusters


def convergence_ratio(E1, E2, sigma):
    """Inverse-iteration contraction factor ``|E1 - sigma| / |E2 - sigma|``."""
    den = abs(E2 - sigma)
    if den == 0:
        raise ZeroDivisionError("shift coincides with E2")
    return abs(E1 - sigma) / den


def _residual(H, x, lam):
    hx = matvec_rounded(H, x, RESIDUAL_ROUNDING)
    return tt_round(add_scaled(1.0, hx, -lam, x), RESIDUAL_ROUNDING)


def residual_norms(H, X, lam):
    """``||H(X_i) - lam_i X_i||`` with the product rounded at 1e-10."""
    return np.array([stable_norm(add_scaled(1.0, matvec_rounded(H, x, RESIDUAL_ROUNDING),
                                            -float(l), x))
                     for x, l in zip(X.members, lam)])


def rayleigh_quotients(H, X):
    return np.array([inner(x, matvec(H, x)) / inner(x, x) for x in X.members])


def _normalized(X):
    return BlockVector([scale(x, 1.0 / stable_norm(x)) for x in X.members], X.max_rank)


def _is_converged(res, lam, tol):
    return res <= tol * np.maximum(1.0, np.abs(lam))


def _report(H, X, lam, converged, history, iterations, t0):
    order = np.argsort(lam, kind="stable")
    lam = np.asarray(lam, dtype=float)[order]
    X = X[list(order)]
    res = residual_norms(H, X, lam)
    return SpectrumReport(lam, X, res, np.asarray(converged, dtype=bool)[order], history,
                          iterations, time.perf_counter() - t0, payload_bytes(X.members))


# ------------------------------------------------------------------ LOBPCG

def _precondition(H, sigma, R, rank, config, iteration):
    opts = replace(config.als, max_rank=rank)
    out = []
    for i, r in enumerate(R.members):
        w = apply_manifold_preconditioner(
            H, sigma, r, rank, opts, positive_definite=config.preconditioner == "energy",
            seed=config.seed * 7919 + iteration * 131 + i)
        out.append(w)
    return BlockVector(out, rank)


def _drop_zero(block):
    keep = [m for m in block.members if stable_norm(m) > 0]
    return BlockVector(keep, block.max_rank) if keep else None


def mp_lobpcg(H, X0, config, sink=None):
    """Manifold-preconditioned block LOBPCG for the ``config.B`` lowest pairs.

    Parameters
    ----------
    H : TtOperator
        Symmetric operator.
    X0 : BlockVector
        ``config.B`` nonzero initial vectors.
    config : SolverConfig
    sink : callable, optional
        Receives a ``HistoryRecord`` per member and iteration.

    Returns
    -------
    SpectrumReport
        Eigenvalues are Rayleigh quotients of the returned vectors.
    """
    t0 = time.perf_counter()
    if len(X0) != config.B:
        raise ValueError(f"expected {config.B} initial vectors, got {len(X0)}")
    hist = _History("lobpcg", sink)
    rank = config.rank
    rr_tol = 1e-10
    Q, q_lam = None, []
    X = X0.with_rank(rank)
    restarts, it = 0, 0
    sigma = config.sigma

    def bmv(block, M):
        return block_matvec(block, M, max_rank=rank, method=config.block_method,
                            cross_tol=config.cross_tol, seed=config.seed)

    while True:
        # (re)start: orthonormalize against Q, initial Rayleigh-Ritz
        X = truncate_block(X, rank)
        X = ortho_against(X, Q, max_rank=rank, method=config.block_method)
        X = block_qr(X, max_rank=rank, method=config.block_method)
        lam, S = rayleigh_ritz(X, H)
        if sigma is None:
            sigma = float(lam[0])
        X = _normalized(bmv(X, S[:, :len(X)].T))
        lam = rayleigh_quotients(H, X)
        P = None
        done = False
        while it < config.max_iter:
            it += 1
            b = len(X)
            R = BlockVector([_residual(H, x, l) for x, l in zip(X.members, lam)])
            res = np.array([stable_norm(r) for r in R.members])
            R = ortho_against(R, Q)
            W = _precondition(H, sigma, R, rank, config, it)
            W = ortho_against(W, Q, max_rank=rank, method=config.block_method)
            W = _drop_zero(W)
            blocks = [X] + [B_ for B_ in (W, P) if B_ is not None]
            blocks = [blocks[0]] + [_normalized(B_) for B_ in blocks[1:]]
            Z = concat(*blocks)
            lamt, St = rayleigh_ritz(Z, H, filter_tol=rr_tol)
            if St.shape[1] < b and P is not None:
                blocks = blocks[:-1]
                Z = concat(*blocks)
                lamt, St = rayleigh_ritz(Z, H, filter_tol=rr_tol)
            if St.shape[1] < b:
                raise FullyDegenerateMass("search space collapsed below the block size")
            Sb = St[:, :b]
            if len(blocks) > 1:
                P = _normalized(bmv(concat(*blocks[1:]), Sb[b:].T))
                P = _drop_zero(P)
            X = _normalized(bmv(Z, Sb.T))
            lam = rayleigh_quotients(H, X)
            res = residual_norms(H, X, lam)
            hist.emit(it, lamt[:b], res, range(len(q_lam), len(q_lam) + b))
            conv = _is_converged(res, lam, config.conv_tol)
            if conv.all():
                done = True
                break
            if config.deflation and conv.any():
                newq = X[list(np.flatnonzero(conv))]
                newq = ortho_against(newq, Q)
                newq = block_qr(newq)
                q_lam.extend(rayleigh_quotients(H, newq))
                Q = newq if Q is None else concat(Q, newq)
                X = X[list(np.flatnonzero(~conv))]
                if restarts < MAX_RESTARTS and config.rank_increase_on_restart > 0:
                    rank += config.rank_increase_on_restart
                    restarts += 1
                break
        else:
            break
        if done or it >= config.max_iter:
            break

    members = list(X.members)
    lam_all = list(lam)
    conv_all = list(_is_converged(residual_norms(H, X, lam), lam, config.conv_tol))
    if Q is not None:
        members = list(Q.members) + members
        lam_all = list(q_lam) + lam_all
        conv_all = [True] * len(Q) + conv_all
    if not all(conv_all):
        warnings.warn(f"LOBPCG stopped after {it} iterations with "
                      f"{len(conv_all) - sum(conv_all)} unconverged pairs", NoConvergence,
                      stacklevel=2)
    return _report(H, BlockVector(members, rank), lam_all, conv_all, hist.records, it, t0)


# --------------------------------------------------- inverse iteration

def _sii_cluster(H, X, rank, config, index):
    """Run inverse iteration on one cluster; returns (X, lam, converged, records)."""
    opts = replace(config.als, formulation="galerkin", max_rank=rank)
    X = BlockVector([enlarge_rank(x, rank, config.seed * 7919 + index * 97 + i)
                     for i, x in enumerate(X.members)], rank)
    X = _normalized(block_qr(X, max_rank=rank, method=config.block_method))
    lam = rayleigh_quotients(H, X)
    sigma = float(np.mean(lam))
    records = []
    prev_change, growth, converged = None, 0, False
    for it in range(1, config.max_iter + 1):
        Y = BlockVector([als_solve(H, sigma, x, x, opts) for x in X.members], rank)
        X = _normalized(block_qr(Y, max_rank=rank, method=config.block_method))
        new = rayleigh_quotients(H, X)
        change = float(np.max(np.abs(new - lam) / np.maximum(np.abs(new), 1e-300)))
        lam = new
        records.append((it, lam.copy(), change))
        if change <= config.conv_tol:
            converged = True
            break
        if prev_change is not None and change > prev_change:
            growth += 1
            if growth >= 3:
                raise ClusterDiverged(f"cluster {index} eigenvalue change grew "
                                      f"3 iterations in a row (shift {sigma:.10g})")
        else:
            growth = 0
        prev_change = change
    return X, lam, converged, records


def mp_sii(H, X0, config, sink=None):
    """Shifted simultaneous inverse iteration at rank ``config.rank``.

    ``X0`` should already approximate the wanted eigenvectors well enough
    for its Rayleigh quotients to be ordered correctly.  The ALS inner
    solves must be accurate (``local_tol`` around 1e-8); loose solves make
    the eigenvalue changes drift upward and the cluster is reported as
    diverged.  Clusters are
    processed independently (in parallel if ``config.workers > 1``); the
    result does not depend on scheduling.
    """
    t0 = time.perf_counter()
    hist = _History("sii", sink)
    E = rayleigh_quotients(H, X0)
    order = np.argsort(E, kind="stable")
    X0 = X0[list(order)]
    E = E[order]
    clusters = cluster_eigenvalues(E, config.cluster_threshold)

    def work(item):
        nu, idx = item
        return _sii_cluster(H, X0[idx], config.rank, config, nu)

    items = list(enumerate(clusters))
    if config.workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(item) for item in items]

    members, lam_all, conv_all, iters = [], [], [], 0
    for (nu, idx), (X, lam, conv, records) in zip(items, results):
        for it, values, change in records:
            hist.emit(it, values, [change] * len(values), idx)
        members.extend(X.members)
        lam_all.extend(lam)
        conv_all.extend([conv] * len(idx))
        iters = max(iters, len(records))
    if not all(conv_all):
        warnings.warn("inverse iteration hit max_iter before converging", NoConvergence,
                      stacklevel=2)
    return _report(H, BlockVector(members, config.rank), lam_all, conv_all, hist.records,
                   iters, t0)


# ------------------------------------------------------------------ PINVIT

def pinvit(H, X0, config, sink=None):
    """Block preconditioned inverse iteration (baseline).

    Each member moves to the lower Ritz vector of ``span{X_i, W_i}`` with
    ``W_i`` the preconditioned residual; the block is then truncated,
    orthonormalized and rotated by a Rayleigh-Ritz step.
    """
    t0 = time.perf_counter()
    hist = _History("pinvit", sink)
    rank = config.rank
    X = block_qr(truncate_block(X0.with_rank(rank), rank), max_rank=rank,
                 method=config.block_method)
    lam = rayleigh_quotients(H, X)
    sigma = float(lam.min()) if config.sigma is None else config.sigma
    conv = np.zeros(len(X), dtype=bool)
    it = 0
    for it in range(1, config.max_iter + 1):
        R = BlockVector([_residual(H, x, l) for x, l in zip(X.members, lam)])
        W = _precondition(H, sigma, R, rank, config, it)
        # keep the corrections out of span(X) so no member can slide down
        # onto an eigenvector already held by another one
        W = ortho_against(W, X, max_rank=rank, method=config.block_method)
        new = []
        for x, w in zip(X.members, W.members):
            if stable_norm(w) == 0:
                new.append(x)
                continue
            pair = BlockVector([x, scale(w, 1.0 / stable_norm(w))])
            _, S = rayleigh_ritz(pair, H)
            new.append(tt_round(add_scaled(S[0, 0], x, S[1, 0], pair[1]), 1e-14, rank))
        X = block_qr(BlockVector(new, rank), max_rank=rank, method=config.block_method)
        _, S = rayleigh_ritz(X, H)
        X = _normalized(block_matvec(X, S.T, max_rank=rank, method=config.block_method))
        lam = rayleigh_quotients(H, X)
        res = residual_norms(H, X, lam)
        hist.emit(it, lam, res)
        conv = _is_converged(res, lam, config.conv_tol)
        if conv.all():
            break
    return _report(H, X, lam, conv, hist.records, it, t0)
