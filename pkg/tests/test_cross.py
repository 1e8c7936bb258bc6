import warnings

import numpy as np
import pytest

from ttvib.blockvector import BlockVector
from ttvib.cross import block_matvec, cross_approx, multifuncrs
from ttvib.errors import NoConvergence, ShapeMismatch
from ttvib.oracle import brute_map
from ttvib.tt import (add_scaled, from_rank_one, linear_combination, norm, random_tt,
                      stable_norm, to_dense, tt_round)


def _rel(X, Y):
    return stable_norm(add_scaled(1.0, X, -1.0, Y)) / max(stable_norm(Y), 1e-300)


def _low_rank_family(sizes, count, base_rank, n_base, seed):
    """``count`` tensors that all lie in the span of ``n_base`` base tensors."""
    rng = np.random.default_rng(seed)
    base = [random_tt(sizes, base_rank, seed * 100 + k) for k in range(n_base)]
    return [tt_round(linear_combination(rng.standard_normal(n_base), base), 1e-14)
            for _ in range(count)], base


def test_identity_reproduces_input():
    X = random_tt((4, 5, 4, 3), 3, 0)
    Y = multifuncrs([X], lambda v: v[0], max(X.ranks))
    assert _rel(Y, X) <= 1e-12


def test_two_rank_one_inputs():
    rng = np.random.default_rng(1)
    X1 = from_rank_one([rng.standard_normal(5) for _ in range(4)])
    X2 = from_rank_one([rng.standard_normal(5) for _ in range(4)])
    Y = multifuncrs([X1, X2], lambda v: 2.0 * v[0] - 3.0 * v[1], 2)
    assert _rel(Y, add_scaled(2.0, X1, -3.0, X2)) <= 1e-10


def test_nonlinear_map_matches_brute_force():
    X = random_tt((4, 4, 4), 2, 2)
    Y = multifuncrs([X], lambda v: v[0] ** 2, 3)
    ref = brute_map(lambda v: v[0] ** 2, [X])
    assert np.linalg.norm(to_dense(Y) - ref) <= 1e-8 * np.linalg.norm(ref)


def test_long_combination_matches_sequential():
    inputs, _ = _low_rank_family((5, 6, 5, 6), 80, 2, 3, 3)
    inputs = inputs + inputs
    w = np.random.default_rng(4).standard_normal(160)
    seq = inputs[0] * w[0]
    for c, X in zip(w[1:], inputs[1:]):
        seq = tt_round(add_scaled(1.0, seq, c, X), 1e-14)
    Y = multifuncrs(inputs, lambda v: w @ v, 6)
    assert _rel(Y, seq) <= 1e-8


def test_exact_rank_recovery_many_instances():
    for seed in range(50):
        inputs, _ = _low_rank_family((4, 5, 4), 6, 1, 2, seed + 10)
        w = np.random.default_rng(seed).standard_normal(6)
        ref = linear_combination(w, inputs)
        Y = multifuncrs(inputs, lambda v: w @ v, 2, seed=seed)
        assert _rel(Y, ref) <= 1e-10


def test_evaluation_budget_per_pass():
    d, n, r = 6, 7, 3
    inputs, _ = _low_rank_family((n,) * d, 4, 1, 3, 5)
    res = cross_approx(inputs, lambda v: v.sum(axis=0), r)
    assert res.converged
    assert max(res.evaluations) <= 4 * d * n * r * r


def test_initial_guess_is_used():
    inputs, _ = _low_rank_family((5,) * 4, 3, 1, 2, 6)
    w = np.array([1.0, -2.0, 0.5])
    ref = linear_combination(w, inputs)
    res = cross_approx(inputs, lambda v: w @ v, 2, x0=tt_round(ref, 1e-14))
    assert _rel(res.tensor, ref) <= 1e-10
    assert res.sweeps <= 3


def test_stall_warns():
    X = random_tt((6,) * 4, 3, 7)
    with pytest.warns(NoConvergence):
        res = cross_approx([X], lambda v: np.exp(v[0]), 1, rel_tol=1e-14, max_sweeps=3)
    assert not res.converged


def test_one_dimensional_input():
    X = from_rank_one([np.arange(5.0)])
    Y = multifuncrs([X], lambda v: v[0] + 1.0, 1)
    assert np.allclose(to_dense(Y), np.arange(5.0) + 1.0)


def test_input_checks():
    with pytest.raises(ShapeMismatch):
        multifuncrs([random_tt((2, 3), 1, 0), random_tt((3, 2), 1, 0)], lambda v: v[0], 1)
    with pytest.raises(ValueError):
        multifuncrs([], lambda v: v, 1)
    with pytest.raises(ValueError):
        multifuncrs([random_tt((2, 3), 1, 0)], lambda v: v[0], 0)


# ------------------------------------------------------------ block matvec

def test_block_matvec_identity():
    X = BlockVector([random_tt((3, 4, 3), 2, s) for s in range(3)])
    Y = block_matvec(X, np.eye(3))
    for a, b in zip(X, Y):
        assert _rel(b, a) <= 1e-12


def test_block_matvec_dense_small():
    X = BlockVector([random_tt((3, 4, 3), 2, s) for s in range(3)])
    M = np.random.default_rng(8).standard_normal((2, 3))
    Y = block_matvec(X, M)
    dense = np.array([to_dense(x) for x in X])
    for i in range(2):
        ref = np.tensordot(M[i], dense, axes=1)
        assert np.linalg.norm(to_dense(Y[i]) - ref) <= 1e-12 * np.linalg.norm(ref)


@pytest.mark.parametrize("method", ["cross", "als"])
def test_block_matvec_paths_agree(method):
    members, _ = _low_rank_family((5, 6, 5, 6), 25, 2, 3, 9)
    X = BlockVector(members, max_rank=6)
    M = np.random.default_rng(10).standard_normal((4, 25))
    direct = block_matvec(X, M, method="direct")
    other = block_matvec(X, M, method=method)
    for a, b in zip(other, direct):
        assert _rel(a, b) <= 1e-8


def test_block_matvec_auto_switches_at_twenty():
    members, _ = _low_rank_family((4, 4, 4), 20, 1, 2, 11)
    X = BlockVector(members, max_rank=2)
    M = np.random.default_rng(12).standard_normal((1, 20))
    Y = block_matvec(X, M)
    assert _rel(Y[0], linear_combination(M[0], members)) <= 1e-10


def test_als_fit_is_quasi_optimal_when_rank_binds():
    sizes = (5,) * 6
    members = [random_tt(sizes, 3, s) for s in range(12)]
    w = np.random.default_rng(13).standard_normal(12)
    exact = linear_combination(w, members)
    best = tt_round(exact, 0.0, 6)
    Y = block_matvec(BlockVector(members), w[None], max_rank=6, method="als")[0]
    assert max(Y.ranks) <= 6
    assert _rel(Y, exact) <= 1.05 * _rel(best, exact)


def test_block_matvec_checks():
    X = BlockVector([random_tt((3, 3), 1, s) for s in range(2)])
    with pytest.raises(ShapeMismatch):
        block_matvec(X, np.ones((2, 3)))
    with pytest.raises(ValueError):
        block_matvec(X, np.eye(2), method="magic")


def test_block_matvec_rank_cap():
    X = BlockVector([random_tt((4, 4, 4), 3, s) for s in range(4)])
    Y = block_matvec(X, np.ones((1, 4)), max_rank=2)
    assert max(Y[0].ranks) <= 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConvergence)
        Z = block_matvec(X, np.ones((1, 4)), max_rank=2, method="cross")
    assert max(Z[0].ranks) <= 2
    assert norm(Z[0]) > 0
