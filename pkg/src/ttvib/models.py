"""DVR discretization and Hamiltonian assembly.

The vibrational Hamiltonian in dimensionless normal coordinates is

    H = sum_i (omega_i / 2) (-d^2/dq_i^2) + V(q),
    V = 1/2 sum_i omega_i q_i^2 + sum_{i<j} alpha_ij q_i q_j
        + 1/6 sum_{ijk} phi3_ijk q_i q_j q_k + 1/24 sum_{ijkl} phi4_ijkl q_i q_j q_k q_l,

discretized on a tensor product of Hermite DVR grids.  Cubic and quartic
coefficients are stored once per sorted index tuple; the full-range sums
are recovered by counting distinct permutations.
"""

import heapq
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cmp_to_key
from pathlib import Path

import numpy as np
import scipy.optimize

from .block import BlockVector
from .errors import IndexOutOfRange, NotPositiveDefinite, TooLarge
from .tt import TtOperator, from_rank_one, op_add_rounded, op_diag

DENSE_DIM_LIMIT = 10**4


# -------------------------------------------------------------------- DVR

@dataclass(frozen=True)
class DvrMode:
    omega: float
    grid: np.ndarray
    kinetic: np.ndarray
    transform: np.ndarray

    @property
    def size(self):
        return self.grid.size

    @property
    def harmonic(self):
        """The 1D harmonic operator ``D + diag(omega q^2 / 2)`` on the grid."""
        return self.kinetic + np.diag(0.5 * self.omega * self.grid ** 2)


@dataclass(frozen=True)
class DvrBasis:
    modes: tuple

    @property
    def mode_sizes(self):
        return tuple(m.size for m in self.modes)

    @property
    def omegas(self):
        return tuple(m.omega for m in self.modes)

    def __len__(self):
        return len(self.modes)


def hermite_dvr(n, omega):
    """Hermite DVR of one mode with kinetic term ``(omega/2)(-d^2/dq^2)``.

    The grid consists of the eigenvalues of the position operator in the
    first ``n`` Hermite functions.  Since the ground state of the harmonic
    part is ``exp(-q^2/2)`` for every ``omega`` in these coordinates, the
    grid itself does not depend on ``omega``; only the kinetic matrix does.
    """
    if n < 2:
        raise ValueError("a DVR mode needs at least 2 points")
    if omega <= 0:
        raise ValueError("omega must be positive")
    k = np.arange(n - 1)
    off = np.sqrt((k + 1) / 2.0)
    X = np.diag(off, 1) + np.diag(off, -1)
    grid, U = np.linalg.eigh(X)
    U = U * np.where(U[0] < 0, -1.0, 1.0)
    # -d^2/dq^2 = (N + 1/2) - (a^2 + a^dag^2)/2 in the Hermite basis
    m = np.arange(n - 2)
    off2 = -0.5 * np.sqrt((m + 1) * (m + 2))
    K = np.diag(np.arange(n) + 0.5) + np.diag(off2, 2) + np.diag(off2, -2)
    D = 0.5 * omega * (U.T @ K @ U)
    D = 0.5 * (D + D.T)
    grid = 0.5 * (grid - grid[::-1])
    return DvrMode(float(omega), grid, D, U)


def build_basis(mode_sizes, omegas):
    if len(mode_sizes) != len(omegas):
        raise ValueError("need one frequency per mode")
    return DvrBasis(tuple(hermite_dvr(int(n), float(w)) for n, w in zip(mode_sizes, omegas)))


# ------------------------------------------------------ Hamiltonian spec

@dataclass
class HamiltonianSpec:
    """Frequencies, couplings and anharmonic force constants of a model."""

    mode_sizes: tuple
    omegas: tuple
    couplings: dict = field(default_factory=dict)
    cubic: dict = field(default_factory=dict)
    quartic: dict = field(default_factory=dict)
    rel_tol: float = 1e-10

    def __post_init__(self):
        self.mode_sizes = tuple(int(n) for n in self.mode_sizes)
        self.omegas = tuple(float(w) for w in self.omegas)
        if len(self.mode_sizes) != len(self.omegas):
            raise ValueError("need one frequency per mode")
        if any(n < 2 for n in self.mode_sizes):
            raise ValueError("mode sizes must be >= 2")
        if any(w <= 0 for w in self.omegas):
            raise ValueError("frequencies must be positive")
        for table in (self.couplings, self.cubic, self.quartic):
            for key in table:
                if tuple(key) != tuple(sorted(key)):
                    raise ValueError(f"index tuple {key} is not sorted ascending")
        for (i, j) in self.couplings:
            if i == j:
                raise ValueError("bilinear couplings need distinct modes")

    @property
    def d(self):
        return len(self.mode_sizes)

    def basis(self):
        return build_basis(self.mode_sizes, self.omegas)

    def monomials(self):
        """Potential as ``[(sorted index tuple, coefficient), ...]`` in lexicographic order.

        Each coefficient already includes the 1/2, 1/6 or 1/24 prefactor and
        the number of distinct permutations of its index tuple.
        """
        terms = {}

        def put(key, value):
            terms[key] = terms.get(key, 0.0) + value

        for i, w in enumerate(self.omegas):
            put((i, i), 0.5 * w)
        for key, a in self.couplings.items():
            put(tuple(key), float(a))
        for key, phi in self.cubic.items():
            put(tuple(key), float(phi) * _permutations(key) / 6.0)
        for key, phi in self.quartic.items():
            put(tuple(key), float(phi) * _permutations(key) / 24.0)
        return sorted(terms.items())


def _permutations(key):
    counts = Counter(key)
    out = math.factorial(len(key))
    for c in counts.values():
        out //= math.factorial(c)
    return out


def coupled_oscillator_spec(d, n, alpha=0.1, omegas=None):
    """Bilinearly coupled oscillator with ``omega_j = sqrt(j/2)``, ``j = 1..d``."""
    if omegas is None:
        omegas = [math.sqrt(j / 2.0) for j in range(1, d + 1)]
    sizes = [n] * d if np.isscalar(n) else list(n)
    couplings = {(i, j): float(alpha) for i in range(d) for j in range(i + 1, d)} if alpha else {}
    return HamiltonianSpec(tuple(sizes), tuple(omegas), couplings)


def read_coefficients(path):
    """Parse a force-field file into ``(omegas, cubic, quartic)``.

    One record per line: ``w i value``, ``c i j k value`` or
    ``q i j k l value`` with 0-based, ascending indices.  ``#`` starts a
    comment.
    """
    omegas, cubic, quartic = {}, {}, {}
    arity = {"w": 1, "c": 3, "q": 4}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag not in arity or len(rest) != arity[tag] + 1:
            raise ValueError(f"{path}:{lineno}: malformed record {raw!r}")
        idx = tuple(int(v) for v in rest[:-1])
        value = float(rest[-1])
        if idx != tuple(sorted(idx)) or min(idx) < 0:
            raise ValueError(f"{path}:{lineno}: indices must be sorted and nonnegative")
        table = {"w": omegas, "c": cubic, "q": quartic}[tag]
        key = idx[0] if tag == "w" else idx
        if key in table:
            raise ValueError(f"{path}:{lineno}: duplicate record {idx}")
        table[key] = value
    d = len(omegas)
    if sorted(omegas) != list(range(d)):
        raise ValueError(f"{path}: frequencies must cover modes 0..{d - 1}")
    return tuple(omegas[i] for i in range(d)), cubic, quartic


# ------------------------------------------------------------- assembly

def kronecker_sum(mats):
    """Rank-2 TT operator of ``sum_k I (x) .. (x) mats[k] (x) .. (x) I``."""
    d = len(mats)
    mats = [np.asarray(m, dtype=float) for m in mats]
    if d == 1:
        return TtOperator([mats[0][None, :, :, None]])
    cores = []
    for k, M in enumerate(mats):
        n = M.shape[0]
        eye = np.eye(n)
        if k == 0:
            c = np.stack([M, eye], axis=-1)[None]
        elif k == d - 1:
            c = np.stack([eye, M], axis=0)[..., None]
        else:
            c = np.zeros((2, n, n, 2))
            c[0, :, :, 0] = eye
            c[1, :, :, 0] = M
            c[1, :, :, 1] = eye
        cores.append(c)
    return TtOperator(cores)


def assemble_kinetic(basis):
    return kronecker_sum([m.kinetic for m in basis.modes])


def _monomial_diag(basis, key, coeff):
    counts = Counter(key)
    factors = []
    for k, mode in enumerate(basis.modes):
        factors.append(mode.grid ** counts.get(k, 0))
    factors[0] = coeff * factors[0]
    return op_diag(from_rank_one(factors))


def assemble_pes(spec, basis=None):
    """Diagonal TT operator of the potential, one monomial at a time.

    Terms are added in lexicographic order of their index tuples and the
    sum is rounded to ``spec.rel_tol`` after every addition.
    """
    basis = basis or spec.basis()
    terms = spec.monomials()
    for key, _ in terms:
        if max(key) >= spec.d or min(key) < 0:
            raise IndexOutOfRange(f"coefficient index {key} outside 0..{spec.d - 1}")
    acc = None
    for key, coeff in terms:
        term = _monomial_diag(basis, key, coeff)
        acc = term if acc is None else op_add_rounded(acc, term, spec.rel_tol)
    return acc


def assemble_hamiltonian(spec, basis=None):
    basis = basis or spec.basis()
    return op_add_rounded(assemble_kinetic(basis), assemble_pes(spec, basis), spec.rel_tol)


def assemble_coupled_oscillator(d, n, alpha=0.1, omegas=None):
    """Direct rank-3 TT operator of the bilinearly coupled oscillator.

    Bond states: 0 = every term finished, 1 = one ``alpha*q_i`` pending a
    partner, 2 = nothing started yet.
    """
    if d < 2:
        raise ValueError("the coupled oscillator needs d >= 2")
    spec = coupled_oscillator_spec(d, n, alpha, omegas)
    basis = spec.basis()
    cores = []
    for k, mode in enumerate(basis.modes):
        m = mode.size
        h = mode.harmonic
        q = np.diag(mode.grid)
        eye = np.eye(m)
        W = np.zeros((3, m, m, 3))
        W[0, :, :, 0] = eye
        W[1, :, :, 0] = q
        W[1, :, :, 1] = eye
        W[2, :, :, 0] = h
        W[2, :, :, 1] = alpha * q
        W[2, :, :, 2] = eye
        if k == 0:
            W = W[2:3]
        elif k == d - 1:
            W = W[:, :, :, 0:1]
        cores.append(W)
    return TtOperator(cores)


# ------------------------------------------------------ levels and guesses

def _tie_compare(tol):
    def cmp(a, b):
        ea, ta = a
        eb, tb = b
        if abs(ea - eb) > tol * max(abs(ea), abs(eb), 1.0):
            return -1 if ea < eb else 1
        return (ta > tb) - (ta < tb)
    return cmp


def lowest_levels(freqs, B, limits=None, tol=1e-12):
    """The ``B`` smallest ``sum_k freqs[k] (m_k + 1/2)`` with their tuples.

    Best-first heap search over the level lattice (optionally bounded by
    ``m_k < limits[k]``).  Energies equal to within ``tol`` are ordered
    lexicographically by quantum numbers.
    """
    freqs = [float(f) for f in freqs]
    d = len(freqs)
    if limits is not None and B > math.prod(limits):
        raise ValueError("B exceeds the number of available levels")

    def energy(t):
        return sum(f * (m + 0.5) for f, m in zip(freqs, t))

    start = (0,) * d
    heap = [(energy(start), start)]
    seen = {start}
    out = []
    cutoff = None
    while heap:
        e, t = heapq.heappop(heap)
        if cutoff is not None and e > cutoff:
            break
        out.append((e, t))
        if len(out) == B:
            cutoff = e + tol * max(abs(e), 1.0)
        for k in range(d):
            if limits is not None and t[k] + 1 >= limits[k]:
                continue
            nt = t[:k] + (t[k] + 1,) + t[k + 1:]
            if nt not in seen:
                seen.add(nt)
                heapq.heappush(heap, (energy(nt), nt))
    out.sort(key=cmp_to_key(_tie_compare(tol)))
    out = out[:B]
    return [e for e, _ in out], [t for _, t in out]


def _mode_eigenvectors(mode):
    w, V = np.linalg.eigh(mode.harmonic)
    for j in range(V.shape[1]):
        v = V[:, j]
        lead = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())[0]
        if v[lead] < 0:
            V[:, j] = -v
    return w, V


def harmonic_guess(omegas, mode_sizes, B, basis=None):
    """Lowest ``B`` product states of the uncoupled harmonic part.

    Returns
    -------
    energies : list of float
    levels : list of tuple
        Quantum numbers of each state.
    block : BlockVector
        Rank-1 TT eigenvectors built from per-mode DVR eigenvectors.
    """
    if B > math.prod(mode_sizes):
        raise ValueError("B exceeds the dimension of the discretization")
    basis = basis or build_basis(mode_sizes, omegas)
    energies, levels = lowest_levels(omegas, B, limits=mode_sizes)
    vecs = [_mode_eigenvectors(m)[1] for m in basis.modes]
    members = [from_rank_one([vecs[k][:, m] for k, m in enumerate(t)]) for t in levels]
    return energies, levels, BlockVector(members)


def _coupling_matrix(omegas, alpha):
    omegas = np.asarray(omegas, dtype=float)
    d = omegas.size
    if np.isscalar(alpha):
        A = np.full((d, d), float(alpha))
    else:
        A = np.asarray(alpha, dtype=float)
    V = A.copy()
    np.fill_diagonal(V, omegas)
    return V


def normal_mode_frequencies(omegas, alpha):
    """Normal frequencies ``sqrt(eig(T^1/2 V T^1/2))``.

    Each frequency is matched to the local mode its eigenvector overlaps
    most (an optimal assignment), so ``alpha = 0`` returns ``omegas`` in the
    given order and level tuples keep their meaning in the weak-coupling
    limit.
    """
    omegas = np.asarray(omegas, dtype=float)
    V = _coupling_matrix(omegas, alpha)
    t = np.sqrt(omegas)
    w2, U = np.linalg.eigh(t[:, None] * V * t[None, :])
    if w2.min() <= 0:
        raise NotPositiveDefinite("coupling too strong: the model is unbound")
    modes, normal = scipy.optimize.linear_sum_assignment(-(U ** 2))
    lam = np.empty_like(w2)
    lam[modes] = np.sqrt(w2[normal])
    return lam


def analytic_coupled_energies(omegas, alpha, level_tuples):
    """Exact energies ``sum_k lambda_k (m_k + 1/2)`` for given normal-mode quanta."""
    lam = normal_mode_frequencies(omegas, alpha)
    return [float(np.dot(lam, np.asarray(t) + 0.5)) for t in level_tuples]


def lowest_coupled_energies(omegas, alpha, B):
    lam = normal_mode_frequencies(omegas, alpha)
    return lowest_levels(lam, B)


# ---------------------------------------------------------------- dense

def potential_on_grid(spec, basis=None):
    """Potential tensor evaluated on the full product grid (full-range sums)."""
    basis = basis or spec.basis()
    grids = np.meshgrid(*[m.grid for m in basis.modes], indexing="ij")
    V = np.zeros(spec.mode_sizes)
    for i, w in enumerate(spec.omegas):
        V += 0.5 * w * grids[i] ** 2
    for (i, j), a in spec.couplings.items():
        V += a * grids[i] * grids[j]
    for key, phi in spec.cubic.items():
        for p in set(itertools.permutations(key)):
            V += phi / 6.0 * grids[p[0]] * grids[p[1]] * grids[p[2]]
    for key, phi in spec.quartic.items():
        for p in set(itertools.permutations(key)):
            V += phi / 24.0 * grids[p[0]] * grids[p[1]] * grids[p[2]] * grids[p[3]]
    return V


def dense_hamiltonian(spec, basis=None, max_dim=DENSE_DIM_LIMIT):
    """Dense matrix of ``sum_k I..D_k..I + diag(V)``, built with ``np.kron``."""
    N = math.prod(spec.mode_sizes)
    if N >= max_dim:
        raise TooLarge(f"dimension {N} reaches the limit {max_dim}")
    basis = basis or spec.basis()
    H = np.diag(potential_on_grid(spec, basis).ravel())
    sizes = spec.mode_sizes
    for k, mode in enumerate(basis.modes):
        left = np.eye(math.prod(sizes[:k]))
        right = np.eye(math.prod(sizes[k + 1:]))
        H += np.kron(np.kron(left, mode.kinetic), right)
    return H
