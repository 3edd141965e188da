"""Monomial basis enumeration and evaluation.

Every neuron applies a weighted sum over all monomials of total degree at
most D in its F (masked) inputs.  The basis order is fixed so that weight
files and emitted RTL are portable: terms are sorted by total degree, ties
broken by descending lexicographic order on the exponent tuple.  For
(F=2, D=3) this yields

    [1, x0, x1, x0^2, x0*x1, x1^2, x0^3, x0^2*x1, x0*x1^2, x1^3]

The constant term doubles as the bias, so a degree-1 basis reproduces the
plain affine neuron exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Refuse to enumerate bases beyond this many terms.
MAX_TERMS = 1 << 20

_INT64_MAX = (1 << 63) - 1


@dataclass(frozen=True)
class MonomialBasis:
    """Ordered exponent vectors of degree <= degree over fan_in variables."""

    fan_in: int
    degree: int
    exponents: np.ndarray  # (M, fan_in) non-negative ints

    def __len__(self) -> int:
        return self.exponents.shape[0]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MonomialBasis)
            and self.fan_in == other.fan_in
            and self.degree == other.degree
            and np.array_equal(self.exponents, other.exponents)
        )


def count_monomials(fan_in: int, degree: int) -> int:
    """Number of monomials of total degree <= degree in fan_in variables.

    Equals C(fan_in + degree, degree), computed exactly.
    """
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    n = math.comb(fan_in + degree, degree)
    if n > _INT64_MAX:
        raise OverflowError(
            f"monomial count C({fan_in + degree},{degree}) exceeds 64-bit range"
        )
    return n


def _gen_exponents(fan_in: int, total: int):
    """All exponent tuples of length fan_in summing to total, descending lex."""
    if fan_in == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _gen_exponents(fan_in - 1, total - first):
            yield (first,) + rest


def enumerate_basis(fan_in: int, degree: int, max_terms: int = MAX_TERMS) -> MonomialBasis:
    """Build the graded-lex monomial basis for (fan_in, degree)."""
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    if degree < 1:
        raise ValueError(f"degree must be >= 1, got {degree}")
    n = count_monomials(fan_in, degree)
    if n > max_terms:
        raise ValueError(f"basis has {n} terms, exceeding cap {max_terms}")
    rows = []
    for d in range(degree + 1):
        rows.extend(_gen_exponents(fan_in, d))
    exps = np.array(rows, dtype=np.int64)
    assert exps.shape == (n, fan_in)
    exps.setflags(write=False)
    return MonomialBasis(fan_in=fan_in, degree=degree, exponents=exps)


def expand(x: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    """Evaluate every basis monomial at x.

    x may be a length-F vector or any array whose last axis has length F;
    the result appends an axis of length M in place of it.  Term i is
    prod_j x_j ** e_ij, with 0**0 == 1, so the leading output is always 1.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != basis.fan_in:
        raise ValueError(f"expected last axis {basis.fan_in}, got {x.shape[-1]}")
    exps = basis.exponents
    out = np.ones(x.shape[:-1] + (exps.shape[0],), dtype=np.float64)
    for j in range(basis.fan_in):
        out *= x[..., j : j + 1] ** exps[:, j]
    return out


def expand_grad(x: np.ndarray, basis: MonomialBasis) -> np.ndarray:
    """Jacobian of expand: entry (i, j) is d m_i / d x_j at x.

    x is a length-F vector; returns an (M, F) matrix.  The derivative of
    x**0 is 0 and 0**0 is treated as 1, so constant terms contribute
    all-zero rows.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (basis.fan_in,):
        raise ValueError(f"expected shape ({basis.fan_in},), got {x.shape}")
    exps = basis.exponents
    m, f = exps.shape
    grad = np.empty((m, f), dtype=np.float64)
    for j in range(f):
        lowered = exps.copy()
        lowered[:, j] = np.maximum(lowered[:, j] - 1, 0)
        grad[:, j] = exps[:, j] * np.prod(x ** lowered, axis=1)
    return grad
