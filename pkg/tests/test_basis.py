import itertools

import numpy as np
import pytest

from lutc.basis import MonomialBasis, count_monomials, enumerate_basis, expand, expand_grad


def brute_force_exponents(fan_in, degree):
    """Independent enumeration: every exponent tuple with sum <= degree."""
    return {
        e
        for e in itertools.product(range(degree + 1), repeat=fan_in)
        if sum(e) <= degree
    }


def test_count_matches_brute_force():
    for fan_in in range(1, 9):
        for degree in range(0, 7):
            assert count_monomials(fan_in, degree) == len(
                brute_force_exponents(fan_in, degree)
            )


def test_count_examples():
    assert count_monomials(2, 3) == 10
    assert count_monomials(5, 0) == 1
    assert count_monomials(4, 2) == 15


def test_count_overflow_guard():
    with pytest.raises(OverflowError):
        count_monomials(1, 2**63)


def test_basis_2_3_term_by_term():
    # the canonical 10-term degree-3 expansion of [x0, x1]
    basis = enumerate_basis(2, 3)
    expected = [
        (0, 0),  # 1
        (1, 0), (0, 1),  # x0, x1
        (2, 0), (1, 1), (0, 2),  # x0^2, x0*x1, x1^2
        (3, 0), (2, 1), (1, 2), (0, 3),  # x0^3, x0^2*x1, x0*x1^2, x1^3
    ]
    assert [tuple(row) for row in basis.exponents] == expected


def test_basis_degree_one_is_affine():
    basis = enumerate_basis(3, 1)
    assert [tuple(r) for r in basis.exponents] == [
        (0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)
    ]


def test_basis_single_variable():
    basis = enumerate_basis(1, 2)
    assert [tuple(r) for r in basis.exponents] == [(0,), (1,), (2,)]


def test_basis_invariants():
    for fan_in in range(1, 7):
        for degree in range(1, 5):
            b = enumerate_basis(fan_in, degree)
            assert len(b) == count_monomials(fan_in, degree)
            rows = [tuple(r) for r in b.exponents]
            assert len(set(rows)) == len(rows)
            assert rows[0] == (0,) * fan_in
            degs = [sum(r) for r in rows]
            assert degs == sorted(degs)


def test_basis_cap():
    with pytest.raises(ValueError):
        enumerate_basis(8, 6, max_terms=100)


def test_basis_order_is_pure():
    a = enumerate_basis(4, 3)
    b = enumerate_basis(4, 3)
    assert a == b


def test_expand_example():
    out = expand([2.0, 3.0], enumerate_basis(2, 2))
    assert np.array_equal(out, [1, 2, 3, 4, 6, 9])


def test_expand_zero_input():
    basis = enumerate_basis(3, 3)
    out = expand([0.0, 0.0, 0.0], basis)
    assert out[0] == 1.0
    assert np.all(out[1:] == 0.0)


def test_expand_degree_one_is_identity_plus_constant():
    rng = np.random.default_rng(0)
    x = rng.normal(size=5)
    out = expand(x, enumerate_basis(5, 1))
    assert out[0] == 1.0
    assert np.array_equal(out[1:], x)


def test_expand_batched():
    basis = enumerate_basis(2, 2)
    xs = np.array([[2.0, 3.0], [0.0, 1.0]])
    out = expand(xs, basis)
    assert out.shape == (2, 6)
    assert np.array_equal(out[0], [1, 2, 3, 4, 6, 9])


def test_expand_grad_product_rule():
    basis = enumerate_basis(2, 2)
    grad = expand_grad(np.array([2.0, 3.0]), basis)
    # row for x0*x1 -> [x1, x0]
    i = [tuple(r) for r in basis.exponents].index((1, 1))
    assert np.array_equal(grad[i], [3.0, 2.0])
    # constant row -> zeros
    assert np.all(grad[0] == 0.0)
    # x0^2 row -> [2*x0, 0]
    j = [tuple(r) for r in basis.exponents].index((2, 0))
    assert np.array_equal(grad[j], [4.0, 0.0])


def test_expand_grad_matches_finite_differences():
    rng = np.random.default_rng(1)
    h = 1e-6
    for fan_in, degree in [(2, 3), (3, 2), (4, 4)]:
        basis = enumerate_basis(fan_in, degree)
        # bounded away from 0 so relative errors are well defined
        x = rng.uniform(0.5, 2.0, fan_in) * rng.choice([-1.0, 1.0], fan_in)
        grad = expand_grad(x, basis)
        for j in range(fan_in):
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            fd = (expand(xp, basis) - expand(xm, basis)) / (2 * h)
            rel = np.abs(fd - grad[:, j]) / np.maximum(
                1e-6, np.maximum(np.abs(fd), np.abs(grad[:, j]))
            )
            assert rel.max() < 1e-6
