"""m-lifts of vectors and matrices.

The lift of ``x`` in R^n is the vector of weighted degree-m monomials
``sqrt(m! / prod(alpha_i!)) * x**alpha``, one per exponent tuple ``alpha``
with ``sum(alpha) == m``. Exponent tuples are ordered lexicographically
descending, so for ``n = 2, m = 2`` the basis is
``(x1^2, sqrt(2) x1 x2, x2^2)``.

The weights make the lift norm-preserving up to the power,
``|lift(x)| == |x|**m``, and the induced matrix lifts are multiplicative
and commute with the exponential.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial, prod

import numpy as np

from .errors import DimensionError

MAX_DEGREE = 8
MAX_LIFT_DIM = 4096
# cap on the number of monomial products in the exact expansion of A^[m]
MAX_EXPANSION_TERMS = 20_000_000


def lift_dimension(n, m):
    """Number of degree-``m`` monomials in ``n`` variables, ``C(n+m-1, m)``."""
    if int(n) != n or int(m) != m or n < 1 or m < 1:
        raise ValueError(f"n and m must be positive integers, got n={n}, m={m}")
    if m > MAX_DEGREE:
        raise DimensionError(f"lift degree {m} exceeds the supported maximum {MAX_DEGREE}")
    dim = comb(int(n) + int(m) - 1, int(m))
    if dim > MAX_LIFT_DIM:
        raise DimensionError(
            f"lifted dimension C({n}+{m}-1, {m}) = {dim} exceeds {MAX_LIFT_DIM}")
    return dim


def _compositions(n, m):
    # all exponent tuples of length n summing to m, lexicographically descending
    if n == 1:
        yield (m,)
        return
    for first in range(m, -1, -1):
        for rest in _compositions(n - 1, m - first):
            yield (first,) + rest


def _multinomial(alpha):
    return factorial(sum(alpha)) // prod(factorial(a) for a in alpha)


@dataclass(frozen=True)
class LiftBasis:
    n: int
    m: int
    indices: tuple
    coeffs: np.ndarray

    @property
    def dim(self):
        return len(self.indices)

    def position(self, alpha):
        return self._lookup[tuple(alpha)]

    @property
    def _lookup(self):
        return _lookup_table(self.n, self.m)

    def labels(self):
        """Human readable monomial labels, e.g. ``x1^2``, ``x1*x2``."""
        out = []
        for alpha in self.indices:
            parts = []
            for i, a in enumerate(alpha, start=1):
                if a == 1:
                    parts.append(f"x{i}")
                elif a > 1:
                    parts.append(f"x{i}^{a}")
            out.append("*".join(parts))
        return out


@lru_cache(maxsize=None)
def _lookup_table(n, m):
    return {alpha: k for k, alpha in enumerate(_compositions(n, m))}


@lru_cache(maxsize=None)
def lift_basis(n, m):
    lift_dimension(n, m)
    indices = tuple(_compositions(n, m))
    coeffs = np.sqrt([float(_multinomial(a)) for a in indices])
    coeffs.setflags(write=False)
    return LiftBasis(n=n, m=m, indices=indices, coeffs=coeffs)


def lift_vector(x, m):
    """m-lift of a vector (or of each row of an ``(..., n)`` array)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    basis = lift_basis(n, m)
    exps = np.array(basis.indices)                       # (n_m, n)
    mono = np.prod(x[..., None, :] ** exps, axis=-1)     # (..., n_m)
    return basis.coeffs * mono


def _orderings(counts):
    # distinct sequences whose index histogram equals `counts`
    if not any(counts):
        yield ()
        return
    for i, c in enumerate(counts):
        if c:
            rest = counts[:i] + (c - 1,) + counts[i + 1:]
            for tail in _orderings(rest):
                yield (i,) + tail


@lru_cache(maxsize=None)
def _power_lift_table(n, m):
    """Exact expansion of ``prod_i (sum_j A_ij x_j)^alpha_i``.

    For row index ``alpha`` the factors are rows ``r`` (alpha as a sorted
    multiset); the coefficient of ``x^beta`` is the sum over every distinct
    ordering ``c`` of beta's multiset of ``prod_k A[r_k, c_k]``. Terms are
    grouped by target entry so a single ``reduceat`` sums them.
    """
    basis = lift_basis(n, m)
    dim = basis.dim
    n_terms = dim * n ** m
    if n_terms > MAX_EXPANSION_TERMS:
        raise DimensionError(
            f"exact lift expansion needs ~{n_terms} terms for n={n}, m={m}")
    multisets = [sum(([i] * a for i, a in enumerate(alpha)), []) for alpha in basis.indices]
    orderings = [list(_orderings(alpha)) for alpha in basis.indices]

    rows, cols, starts, scale = [], [], [], []
    count = 0
    for a, r in enumerate(multisets):
        for b, cs in enumerate(orderings):
            starts.append(count)
            scale.append(basis.coeffs[a] / basis.coeffs[b])
            for c in cs:
                rows.append(r)
                cols.append(c)
                count += 1
    return (np.array(rows, dtype=np.intp), np.array(cols, dtype=np.intp),
            np.array(starts, dtype=np.intp), np.array(scale))


def lift_matrix(A, m):
    """The matrix ``A^[m]`` with ``lift_vector(A @ x, m) == A^[m] @ lift_vector(x, m)``.

    Accepts a single ``(n, n)`` matrix or a stack ``(..., n, n)``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DimensionError(f"expected square matrix, got shape {A.shape}")
    n = A.shape[-1]
    rows, cols, starts, scale = _power_lift_table(n, m)
    dim = lift_basis(n, m).dim
    terms = np.prod(A[..., rows, cols], axis=-1)
    sums = np.add.reduceat(terms, starts, axis=-1)
    return (sums * scale).reshape(A.shape[:-2] + (dim, dim))


@lru_cache(maxsize=None)
def _infinitesimal_table(n, m):
    # d/dt x^alpha = sum_{i,j} alpha_i A_ij x^(alpha - e_i + e_j)
    basis = lift_basis(n, m)
    dim = basis.dim
    table = np.zeros((dim, dim, n, n))
    for a, alpha in enumerate(basis.indices):
        for i in range(n):
            if alpha[i] == 0:
                continue
            for j in range(n):
                beta = list(alpha)
                beta[i] -= 1
                beta[j] += 1
                b = basis.position(beta)
                table[a, b, i, j] += alpha[i] * basis.coeffs[a] / basis.coeffs[b]
    table.setflags(write=False)
    return table


def infinitesimal_lift(A, m):
    """The matrix ``A_[m]`` generating the lifted flow of ``dx/dt = A x``.

    ``expm(infinitesimal_lift(A, m) * t) == lift_matrix(expm(A * t), m)``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DimensionError(f"expected square matrix, got shape {A.shape}")
    table = _infinitesimal_table(A.shape[-1], m)
    return np.einsum("abij,...ij->...ab", table, A)
