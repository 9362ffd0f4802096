"""Kronecker-lifted operators and their restriction to symmetric tensors.

The level-``i`` lift of a matrix ``M`` acting on ``R^n`` is the Kronecker sum

    L_i(M) = sum_j  I_{n^j} ⊗ M ⊗ I_{n^(i-1-j)},

which generates the dynamics of ``x ⊗ x ⊗ ... ⊗ x`` whenever ``x' = M x``.
Because ``x^{⊗i}`` is a symmetric tensor, everything downstream works in
orthonormal coordinates on the symmetric subspace, whose dimension is
``C(n+i-1, i)`` instead of ``n^i``.

Symmetric coordinates
---------------------
Basis vectors are indexed by non-decreasing multi-indices
``(k_1 <= ... <= k_i)`` in lexicographic order.  The coordinate of ``x^{⊗i}``
along multi-index ``α`` is ``sqrt(N_α) * prod_k x_k``, with ``N_α`` the
multinomial coefficient (number of distinct orderings of ``α``).  The
embedding ``E`` (``dim x n^i``) therefore has orthonormal rows.
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement
from math import comb, factorial

import numpy as np

from .exceptions import DimensionCapError, InvariantSubspaceError
from .linalg import as_matrix

__all__ = [
    "SwitchedLinearSystem",
    "SymmetricBasis",
    "HierarchyLevel",
    "lift_operator_full",
    "lift_operator_recursive",
    "symmetric_basis",
    "reduce",
    "reduced_lift",
    "build_level",
    "lift_state",
    "DEFAULT_DIM_CAP",
]

DEFAULT_DIM_CAP = 5000

# above this many full-space entries per side, build_level skips the dense lift
_FULL_LIFT_LIMIT = 1024

_INVARIANCE_TOL = 1e-8


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SwitchedLinearSystem:
    """The uncertain system ``x' = (A + Δ(t) A0) x`` with ``Δ(t) >= 0``.

    Parameters
    ----------
    a : (n, n) array_like
        Nominal dynamics.  Not required to be Hurwitz here.
    a0 : (n, n) array_like
        Perturbation direction.
    """

    a: np.ndarray
    a0: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.a, square=True, name="A")
        a0 = as_matrix(self.a0, square=True, name="A0")
        if a.shape != a0.shape:
            raise ValueError(f"A is {a.shape} but A0 is {a0.shape}")
        object.__setattr__(self, "a", _frozen(a))
        object.__setattr__(self, "a0", _frozen(a0))

    @property
    def n(self):
        return self.a.shape[0]

    def mode(self, delta):
        """System matrix ``A + delta * A0``."""
        return self.a + float(delta) * self.a0

    def transformed(self, t):
        """The same system in coordinates ``z = t^{-1} x``."""
        t = as_matrix(t, square=True, name="transform")
        ti = np.linalg.inv(t)
        return SwitchedLinearSystem(ti @ self.a @ t, ti @ self.a0 @ t)


@dataclass(frozen=True, eq=False)
class SymmetricBasis:
    """Orthonormal coordinates on the degree-`i` symmetric tensors over ``R^n``."""

    n: int
    i: int
    multi_indices: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.multi_indices.shape[0]

    @cached_property
    def counts(self):
        """``(dim, n)`` array of occurrence counts per multi-index."""
        out = np.zeros((self.dim, self.n), dtype=int)
        for row, alpha in enumerate(self.multi_indices):
            for k in alpha:
                out[row, k] += 1
        return out

    @cached_property
    def index(self):
        """Map from a count tuple to its row in the basis."""
        return {tuple(c): r for r, c in enumerate(self.counts)}

    @cached_property
    def embedding(self):
        """Row-orthonormal ``(dim, n**i)`` matrix ``E`` onto the symmetric subspace."""
        n, i = self.n, self.i
        flat = np.arange(n**i)
        # base-n digits, first tensor factor most significant (np.kron order)
        digits = (flat[:, None] // n ** np.arange(i - 1, -1, -1)[None, :]) % n
        counts = np.stack([(digits == k).sum(axis=1) for k in range(n)], axis=1)
        rows = np.array([self.index[tuple(c)] for c in counts])
        e = np.zeros((self.dim, n**i))
        e[rows, flat] = 1.0 / self.weights[rows]
        return e


def symmetric_basis(n, i, *, dim_cap=DEFAULT_DIM_CAP):
    """Build the symmetric basis for degree-`i` tensors over ``R^n``.

    Raises
    ------
    DimensionCapError
        If ``C(n+i-1, i)`` exceeds `dim_cap`.
    """
    if n < 1 or i < 1:
        raise ValueError(f"need n >= 1 and i >= 1, got n={n}, i={i}")
    dim = comb(n + i - 1, i)
    if dim > dim_cap:
        raise DimensionCapError(
            f"level {i} over R^{n} has reduced dimension {dim} > cap {dim_cap}"
        )
    alphas = np.array(list(combinations_with_replacement(range(n), i)), dtype=int)
    weights = np.empty(dim)
    for r, alpha in enumerate(alphas):
        _, c = np.unique(alpha, return_counts=True)
        mult = factorial(i)
        for ck in c:
            mult //= factorial(int(ck))
        weights[r] = np.sqrt(mult)
    return SymmetricBasis(n=n, i=i, multi_indices=alphas, weights=weights)


def lift_operator_full(m, i):
    """Dense ``n^i x n^i`` Kronecker-sum lift of `m` (closed form)."""
    m = as_matrix(m, square=True)
    if int(i) != i or i < 1:
        raise ValueError(f"level must be an integer >= 1, got {i}")
    n = m.shape[0]
    out = np.zeros((n**i, n**i))
    for j in range(i):
        out += np.kron(np.kron(np.eye(n**j), m), np.eye(n ** (i - 1 - j)))
    return out


def lift_operator_recursive(m, i):
    """Same operator as :func:`lift_operator_full`, built by the recursion
    ``L_i = I_n ⊗ L_{i-1} + M ⊗ I_{n^(i-1)}``."""
    m = as_matrix(m, square=True)
    if int(i) != i or i < 1:
        raise ValueError(f"level must be an integer >= 1, got {i}")
    n = m.shape[0]
    out = m
    for k in range(2, i + 1):
        out = np.kron(np.eye(n), out) + np.kron(m, np.eye(n ** (k - 1)))
    return out


def reduce(m_full, basis, *, check=True):
    """Restrict a lifted operator to the symmetric subspace: ``E m E^T``.

    Raises
    ------
    InvariantSubspaceError
        If `check` is set and ``(I - E^T E) m E^T`` is not negligible, which
        means `m_full` is not a lift.
    """
    m_full = as_matrix(m_full, square=True, name="m_full")
    e = basis.embedding
    if m_full.shape[0] != e.shape[1]:
        raise ValueError(
            f"operator is {m_full.shape}, basis expects side {e.shape[1]}"
        )
    me = m_full @ e.T
    if check:
        defect = me - e.T @ (e @ me)
        scale = max(1.0, np.linalg.norm(m_full, 2))
        if np.linalg.norm(defect, 2) > _INVARIANCE_TOL * scale:
            raise InvariantSubspaceError(
                "operator does not leave the symmetric subspace invariant"
            )
    return e @ me


def reduced_lift(m, basis):
    """Reduced lift of `m` computed directly in symmetric coordinates.

    Equivalent to ``reduce(lift_operator_full(m, i), basis)`` but never forms
    the ``n^i``-sized operator: differentiating the scaled monomial
    ``sqrt(N_α) x^α`` along ``x' = m x`` couples ``α`` only to multi-indices
    obtained by moving one unit of degree from coordinate ``k`` to ``l``.
    """
    m = as_matrix(m, square=True)
    n = basis.n
    if m.shape[0] != n:
        raise ValueError(f"matrix is {m.shape}, basis is over R^{n}")
    counts, w, index = basis.counts, basis.weights, basis.index
    out = np.zeros((basis.dim, basis.dim))
    for row, c in enumerate(counts):
        for k in np.flatnonzero(c):
            for l in range(n):
                if m[k, l] == 0.0:
                    continue
                beta = c.copy()
                beta[k] -= 1
                beta[l] += 1
                col = index[tuple(beta)]
                out[row, col] += c[k] * m[k, l] * w[row] / w[col]
    return out


@dataclass(frozen=True, eq=False)
class HierarchyLevel:
    """Reduced lifted operators of ``A`` and ``A0`` at hierarchy level `i`.

    By linearity of the lift, the reduced operator of ``A + δ A0`` is
    ``cal_a + δ * cal_a0``.
    """

    i: int
    basis: SymmetricBasis
    cal_a: np.ndarray
    cal_a0: np.ndarray

    @property
    def dim(self):
        return self.basis.dim

    def mode(self, delta):
        return self.cal_a + float(delta) * self.cal_a0


def build_level(sys, i, *, dim_cap=DEFAULT_DIM_CAP):
    """Construct hierarchy level `i` for `sys` in reduced coordinates.

    Small levels go through the dense lift and :func:`reduce`; large ones use
    :func:`reduced_lift` so that ``n^i`` never has to fit in memory.
    """
    basis = symmetric_basis(sys.n, i, dim_cap=dim_cap)
    if i == 1:
        return HierarchyLevel(1, basis, _frozen(sys.a), _frozen(sys.a0))
    if sys.n**i <= _FULL_LIFT_LIMIT:
        cal_a = reduce(lift_operator_full(sys.a, i), basis)
        cal_a0 = reduce(lift_operator_full(sys.a0, i), basis)
    else:
        cal_a = reduced_lift(sys.a, basis)
        cal_a0 = reduced_lift(sys.a0, basis)
    return HierarchyLevel(i, basis, _frozen(cal_a), _frozen(cal_a0))


def lift_state(x, basis):
    """Coordinates of ``x^{⊗i}`` in `basis`; the norm equals ``||x||**i``.

    `x` may also be a ``(T, n)`` stack of states, giving a ``(T, dim)`` result.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != basis.n:
        raise ValueError(f"state has length {x.shape[-1]}, basis is over R^{basis.n}")
    return x[..., basis.multi_indices].prod(axis=-1) * basis.weights
