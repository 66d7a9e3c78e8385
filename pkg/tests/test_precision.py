"""Arbitrary-precision scaffolding: context management, decimal
round-trips, Gauss-Legendre construction, and the damped normal solver."""

import random

import gmpy2
import numpy as np
import pytest
from gmpy2 import mpfr

from symquad.errors import InversionFailure
from symquad.precision import (
    FAST_PRECISION,
    FULL_PRECISION,
    current_precision,
    decimal_digits,
    eps_for,
    format_mpfr,
    gauss_legendre,
    legendre_pair,
    parse_mpfr,
    solve_damped_normal,
    working_precision,
)

# Degree-9 Gauss-Legendre rule computed with an independent implementation
# (Newton-polished Legendre roots in 45-digit decimal arithmetic).
GL5 = [
    ("-0.9061798459386639927976268782993929651257",
     "0.2369268850561890875142640407199173626433"),
    ("-0.5384693101056830910363144207002088049673",
     "0.4786286704993664680412915148356381929123"),
    ("0.0", "0.5688888888888888888888888888888888888889"),
    ("0.5384693101056830910363144207002088049673",
     "0.4786286704993664680412915148356381929123"),
    ("0.9061798459386639927976268782993929651257",
     "0.2369268850561890875142640407199173626433"),
]


def test_working_precision_nests_and_restores():
    base = current_precision()
    with working_precision(FAST_PRECISION):
        assert current_precision() == FAST_PRECISION
        with working_precision(FULL_PRECISION):
            assert current_precision() == FULL_PRECISION
            x = mpfr(1) / 3
            assert x.precision == FULL_PRECISION
        assert current_precision() == FAST_PRECISION
    assert current_precision() == base


def test_working_precision_rejects_out_of_range():
    with pytest.raises(ValueError):
        with working_precision(8):
            pass
    with pytest.raises(ValueError):
        with working_precision(10 ** 6):
            pass


@pytest.mark.parametrize("bits", [FAST_PRECISION, FULL_PRECISION])
def test_format_parse_roundtrip_is_bit_exact(bits):
    rng = random.Random(bits)
    with working_precision(bits):
        for _ in range(200):
            mant = rng.getrandbits(bits) | (1 << (bits - 1))
            exp = rng.randint(-120, 120)
            x = mpfr(mant) * mpfr(2) ** (exp - bits)
            if rng.random() < 0.5:
                x = -x
            assert parse_mpfr(format_mpfr(x)) == x


def test_eps_and_decimal_digits():
    with working_precision(113):
        assert eps_for() == mpfr(2) ** -113
        assert eps_for(53) == mpfr(2) ** -53
    assert decimal_digits(113) == 37  # ceil(113 log10 2) + 2
    assert decimal_digits(256) == 80


def test_legendre_pair_against_independent_values():
    # P_4(x) = (35 x^4 - 30 x^2 + 3)/8 and its derivative, evaluated
    # symbolically at x = 3/10.
    with working_precision(113):
        x = mpfr(3) / 10
        p, dp = legendre_pair(4, x)
        p_exact = (35 * x ** 4 - 30 * x ** 2 + 3) / 8
        dp_exact = (140 * x ** 3 - 60 * x) / 8
        assert abs(p - p_exact) < mpfr(2) ** -105
        assert abs(dp - dp_exact) < mpfr(2) ** -105


def test_gauss_legendre_five_nodes_match_oracle():
    rule = gauss_legendre(5, FAST_PRECISION)
    with working_precision(FAST_PRECISION):
        tol = mpfr(10) ** -32
        assert len(rule) == 5 and rule.degree == 9
        for (xs, ws), x, w in zip(GL5, rule.nodes, rule.weights):
            assert abs(x - mpfr(xs)) < tol
            assert abs(w - mpfr(ws)) < tol


def test_gauss_legendre_structure():
    for n in (1, 2, 7, 16):
        rule = gauss_legendre(n, FAST_PRECISION)
        with working_precision(FAST_PRECISION):
            assert list(rule.nodes) == sorted(rule.nodes)
            assert all(w > 0 for w in rule.weights)
            assert abs(sum(rule.weights, mpfr(0)) - 2) < mpfr(10) ** -30
            # exact symmetry about the origin
            assert all(a == -b for a, b in
                       zip(rule.nodes, reversed(rule.nodes)))


def test_gauss_legendre_exactness_boundary():
    """n nodes integrate monomials exactly through degree 2n-1 and visibly
    fail at degree 2n, for every n up to 30."""
    with working_precision(FAST_PRECISION):
        tol = mpfr(10) ** -28
        for n in range(1, 31):
            rule = gauss_legendre(n, FAST_PRECISION)

            def moment(k):
                acc = mpfr(0)
                for x, w in zip(rule.nodes, rule.weights):
                    acc += w * x ** k
                exact = mpfr(2) / (k + 1) if k % 2 == 0 else mpfr(0)
                return abs(acc - exact)

            for k in range(0, 2 * n, max(1, (2 * n) // 6)):
                assert moment(k) < tol, (n, k)
            assert moment(2 * n - 1) < tol
            # the first inexact degree: the defect shrinks as n grows
            # (2.7e-18 at n=30) but stays orders above the roundoff level
            assert moment(2 * n) > mpfr(10) ** -22, n


def test_gauss_legendre_rejects_bad_input():
    with pytest.raises(ValueError):
        gauss_legendre(0, FAST_PRECISION)


def test_solve_damped_normal_matches_dense_oracle():
    """The mpfr elimination agrees with numpy solving the same damped
    normal equations in float64."""
    rng = np.random.default_rng(42)
    with working_precision(FAST_PRECISION):
        for _ in range(25):
            m, n = rng.integers(3, 9), rng.integers(1, 7)
            if m < n:
                m, n = n, m
            J = rng.standard_normal((m, n))
            r = rng.standard_normal(m)
            lam = float(rng.uniform(0, 0.5))
            A = J.T @ J + lam * np.diag(np.diag(J.T @ J))
            want = np.linalg.solve(A, J.T @ r)
            got = solve_damped_normal(
                [[mpfr(v) for v in row] for row in J],
                [mpfr(v) for v in r],
                mpfr(lam),
            )
            assert np.allclose([float(v) for v in got], want,
                               rtol=1e-9, atol=1e-11)


def test_solve_damped_normal_flags_rank_deficiency():
    with working_precision(FAST_PRECISION):
        jac = [[mpfr(1), mpfr(2)], [mpfr(2), mpfr(4)], [mpfr(3), mpfr(6)]]
        with pytest.raises(InversionFailure):
            solve_damped_normal(jac, [mpfr(1)] * 3, mpfr(0))


def test_solve_damped_normal_empty_system():
    assert solve_damped_normal([], [], mpfr(0)) == []
