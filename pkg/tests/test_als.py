import numpy as np
import pytest

from ttvib.als import AlsOptions, als_solve, apply_manifold_preconditioner, local_galerkin_matvec
from ttvib.errors import LocalSolveFailure, ShapeMismatch
from ttvib.models import assemble_coupled_oscillator
from ttvib.tt import (TtTensor, add_scaled, matvec, op_identity, op_scale, orthogonalize,
                      random_tt, stable_norm, to_dense, zeros)


def _random_spd_op(sizes, seed):
    """Kronecker sum of random SPD matrices, a rank-2 TT operator."""
    from ttvib.models import kronecker_sum
    rng = np.random.default_rng(seed)
    mats = []
    for n in sizes:
        A = rng.standard_normal((n, n))
        mats.append(A @ A.T / n + np.eye(n))
    return kronecker_sum(mats)


def _frames(X, p):
    """Left-orthonormal cores before p and right-orthonormal after."""
    L = orthogonalize(X, "left")
    R = orthogonalize(X, "right")
    cores = list(L.cores[:p]) + [X.cores[p]] + list(R.cores[p + 1:])
    # shapes agree because orthogonalization keeps ranks of a full-rank input
    return TtTensor(cores)


def _projection(X, p):
    cols = []
    shape = X.cores[p].shape
    for k in range(int(np.prod(shape))):
        e = np.zeros(int(np.prod(shape)))
        e[k] = 1.0
        cores = list(X.cores)
        cores[p] = e.reshape(shape)
        cols.append(to_dense(TtTensor(cores)).ravel())
    return np.array(cols).T


def test_identity_system_returns_rhs():
    F = random_tt((3, 4, 3), 2, 0)
    X0 = random_tt((3, 4, 3), 3, 1)
    X = als_solve(op_identity((3, 4, 3)), 0.0, F, X0, AlsOptions(n_swp=1))
    assert np.linalg.norm(to_dense(X) - to_dense(F)) <= 1e-12 * np.linalg.norm(to_dense(F))


def test_coupled_oscillator_matches_dense_solve():
    H = assemble_coupled_oscillator(3, 6, 0.1)
    Hd = H.full()
    lam_min = np.linalg.eigvalsh(Hd)[0]
    sigma = lam_min - 1.0
    F = random_tt((6, 6, 6), 2, 2)
    X0 = random_tt((6, 6, 6), 6, 3)
    X = als_solve(H, sigma, F, X0, AlsOptions(n_swp=3, local_solver="direct"))
    ref = np.linalg.solve(Hd - sigma * np.eye(216), to_dense(F).ravel())
    assert np.linalg.norm(to_dense(X).ravel() - ref) <= 1e-8 * np.linalg.norm(ref)


@pytest.mark.parametrize("seed", range(5))
def test_normal_equation_residual_non_increasing(seed):
    sizes = (4, 5, 4)
    H = _random_spd_op(sizes, seed)
    F = random_tt(sizes, 3, seed + 10)
    X0 = random_tt(sizes, 2, seed + 20)
    res = []
    for n_swp in range(1, 5):
        X = als_solve(H, 0.0, F, X0, AlsOptions(n_swp=n_swp, formulation="normal_equations"))
        res.append(stable_norm(add_scaled(1.0, matvec(H, X), -1.0, F)))
    assert all(b <= a * (1 + 1e-10) for a, b in zip(res, res[1:]))


def test_iterative_local_solver_close_to_direct():
    sizes = (5, 6, 5)
    H = _random_spd_op(sizes, 4)
    F = random_tt(sizes, 2, 5)
    X0 = random_tt(sizes, 5, 6)
    Xd = als_solve(H, 0.0, F, X0, AlsOptions(n_swp=2, local_solver="direct"))
    Xi = als_solve(H, 0.0, F, X0, AlsOptions(n_swp=2, local_solver="iterative",
                                             local_tol=1e-12, local_max_iter=500))
    assert np.linalg.norm(to_dense(Xd) - to_dense(Xi)) <= 1e-8 * np.linalg.norm(to_dense(Xd))


def test_rank_cap_applied_to_guess():
    sizes = (4, 4, 4)
    H = _random_spd_op(sizes, 7)
    X = als_solve(H, 0.0, random_tt(sizes, 3, 8), random_tt(sizes, 4, 9),
                  AlsOptions(n_swp=1, max_rank=2))
    assert max(X.ranks) <= 2


def test_singular_system_raises():
    sizes = (3, 3)
    H = op_scale(op_identity(sizes), 0.0)
    with pytest.raises(LocalSolveFailure):
        als_solve(H, 0.0, random_tt(sizes, 1, 0), random_tt(sizes, 2, 1),
                  AlsOptions(n_swp=1, local_solver="direct"))


def test_shape_checks():
    with pytest.raises(ShapeMismatch):
        als_solve(op_identity((3, 3)), 0.0, random_tt((3, 4), 1, 0), random_tt((3, 4), 1, 0))
    with pytest.raises(ShapeMismatch):
        als_solve(op_identity((3, 3)), 0.0, random_tt((3, 3), 1, 0), random_tt((3, 2), 1, 0))


def test_options_validation():
    with pytest.raises(ValueError):
        AlsOptions(n_swp=0)
    with pytest.raises(ValueError):
        AlsOptions(local_tol=0.0)
    with pytest.raises(ValueError):
        AlsOptions(formulation="energy")


# ------------------------------------------------------ local projection

def test_local_matvec_identity():
    X = _frames(random_tt((3, 4, 3), 2, 10), 1)
    core = np.random.default_rng(0).standard_normal(X.cores[1].shape)
    out = local_galerkin_matvec(op_identity((3, 4, 3)), 0.0, X, 1, core)
    assert np.allclose(out, core, atol=1e-13)


@pytest.mark.parametrize("p", [0, 1, 2])
def test_local_matvec_matches_dense_projection(p):
    sizes = (4, 4, 4)
    H = _random_spd_op(sizes, 11)
    H = type(H)([c for c in H.cores])
    X = _frames(random_tt(sizes, 2, 12), p)
    P = _projection(X, p)
    core = np.random.default_rng(p).standard_normal(X.cores[p].shape)
    sigma = 0.3
    ref = P.T @ (H.full() - sigma * np.eye(64)) @ P @ core.ravel()
    out = local_galerkin_matvec(H, sigma, X, p, core)
    assert np.allclose(out.ravel(), ref, atol=1e-12 * np.linalg.norm(ref))


def test_local_matvec_linear():
    sizes = (3, 3, 3)
    H = _random_spd_op(sizes, 13)
    X = _frames(random_tt(sizes, 2, 14), 1)
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((2,) + X.cores[1].shape)
    lhs = local_galerkin_matvec(H, 0.1, X, 1, 2 * a - b)
    rhs = 2 * local_galerkin_matvec(H, 0.1, X, 1, a) - local_galerkin_matvec(H, 0.1, X, 1, b)
    assert np.allclose(lhs, rhs, atol=1e-12)


# ---------------------------------------------------------- preconditioner

@pytest.mark.parametrize("pd", [False, True])
def test_preconditioner_scalar_operator(pd):
    sizes = (3, 4, 3)
    R = random_tt(sizes, 2, 15)
    Y = apply_manifold_preconditioner(op_scale(op_identity(sizes), 2.0), 0.0, R, 2,
                                      positive_definite=pd)
    assert np.linalg.norm(to_dense(Y) - to_dense(R) / 2) <= 1e-10 * np.linalg.norm(to_dense(R))


def test_preconditioner_zero_residual():
    Y = apply_manifold_preconditioner(op_identity((3, 3)), 0.0, zeros((3, 3)), 2)
    assert stable_norm(Y) == 0.0


def test_preconditioner_dense_compare():
    sizes = (4, 4, 4)
    H = _random_spd_op(sizes, 16)
    R = random_tt(sizes, 2, 17)
    ref = np.linalg.solve(H.full(), to_dense(R).ravel())
    opts = AlsOptions(n_swp=4, local_solver="direct")
    for pd in (False, True):
        Y = apply_manifold_preconditioner(H, 0.0, R, 4, opts, positive_definite=pd)
        assert np.linalg.norm(to_dense(Y).ravel() - ref) <= 1e-8 * np.linalg.norm(ref)
