"""Polynomial bases: orthonormality against an independent tensor
integration oracle, group invariance of the objective rows, analytic
gradients, and equality of invariant and full-basis residuals."""

import random

import gmpy2
import pytest
from gmpy2 import mpfr

from symquad import domains as dm
from symquad.basis import (
    objective_basis,
    ortho_basis,
    residual,
    residual_full,
    residual_vector,
    tensor_reference,
)
from symquad.precision import FAST_PRECISION, working_precision

from conftest import random_orbit

GRAM_DEGREE = {dm.SQUARE: 8, dm.CUBE: 5, dm.PRISM: 5, dm.PYRAMID: 5,
               dm.TRIANGLE: 8, dm.TETRAHEDRON: 5}


def _random_point(rng, kind):
    dom = dm.domain(kind)
    while True:
        x = tuple(mpfr(rng.uniform(-0.95, 0.95)) for _ in range(dom.dim))
        if dom.contains(x, margin=mpfr("0.01")):
            return x


def _random_rule(rng, kind, degree=3, max_orbits=3):
    dom = dm.domain(kind)
    n = rng.randint(1, max_orbits)
    orbits = tuple(random_orbit(rng, rng.choice(dom.classes))
                   for _ in range(n))
    return dm.QuadRule(dom, degree, orbits)


@pytest.mark.parametrize("kind", dm.KINDS)
def test_orthonormal_to_tensor_oracle(kind):
    """<p_i, p_j> computed with an independent tensor Gauss rule equals
    the identity matrix."""
    q = GRAM_DEGREE[kind]
    basis = ortho_basis(kind, q)
    pts, wts = tensor_reference(kind, 2 * q)
    gram = [[mpfr(0)] * basis.size for _ in range(basis.size)]
    for x, w in zip(pts, wts):
        vals = basis.values(x)
        for i in range(basis.size):
            vi = w * vals[i]
            for j in range(i, basis.size):
                gram[i][j] += vi * vals[j]
    tol = mpfr(10) ** -28
    for i in range(basis.size):
        for j in range(i, basis.size):
            want = 1 if i == j else 0
            assert abs(gram[i][j] - want) < tol, (kind, i, j)


@pytest.mark.parametrize("kind", dm.KINDS)
def test_basis_size_counts_graded_monomials(kind):
    dom = dm.domain(kind)
    for q in (1, 2, 4):
        b = ortho_basis(kind, q)
        if dom.dim == 2:
            want = (q + 1) * (q + 2) // 2
        else:
            want = (q + 1) * (q + 2) * (q + 3) // 6
        assert b.size == want


@pytest.mark.parametrize("kind", dm.KINDS)
def test_objective_rows_are_group_invariant(kind):
    rng = random.Random(17)
    dom = dm.domain(kind)
    objective = objective_basis(kind, 5)
    tol = mpfr(10) ** -28
    for _ in range(5):
        x = _random_point(rng, kind)
        base = objective.values(x)
        for g in dom.group:
            vals = objective.values(g(x))
            assert all(abs(a - b) < tol for a, b in zip(base, vals))


@pytest.mark.parametrize("kind", dm.KINDS)
def test_objective_moments_are_volume_then_zero(kind):
    objective = objective_basis(kind, 5)
    f = objective.moments()
    assert f[0] == gmpy2.sqrt(dm.domain(kind).volume())
    assert all(v == 0 for v in f[1:])
    assert objective.rows[0][0][0] == 0  # first row is the raw constant


@pytest.mark.parametrize("kind", dm.KINDS)
def test_tensor_reference_annihilates_objective(kind):
    """The independent tensor rule integrates every objective function to
    its moment, so its residual through the invariant system is zero."""
    q = 5
    objective = objective_basis(kind, q)
    pts, wts = tensor_reference(kind, q)
    r = objective.moments()
    for x, w in zip(pts, wts):
        vals = objective.values(x)
        for i in range(objective.size):
            r[i] -= w * vals[i]
    norm = gmpy2.sqrt(sum((v * v for v in r), mpfr(0)))
    assert norm < mpfr(10) ** -28


@pytest.mark.parametrize("kind", dm.KINDS)
def test_invariant_residual_equals_full_residual(kind):
    """Restricting the moment system to group-invariant combinations loses
    nothing: for symmetric rules both residuals agree."""
    rng = random.Random(23)
    for _ in range(5):
        rule = _random_rule(rng, kind)
        a = residual(rule).value
        b = residual_full(rule)
        scale = max(mpfr(1), a, b)
        assert abs(a - b) / scale < mpfr(10) ** -28


@pytest.mark.parametrize("kind", dm.KINDS)
def test_objective_gradients_match_finite_differences(kind):
    rng = random.Random(31)
    objective = objective_basis(kind, 4)
    dom = dm.domain(kind)
    h = mpfr(2) ** -40
    tol = mpfr(2) ** -(FAST_PRECISION // 4)
    for _ in range(3):
        x = _random_point(rng, kind)
        vals, grads = objective.values_grads(x)
        assert all(abs(a - b) < mpfr(10) ** -30
                   for a, b in zip(vals, objective.values(x)))
        for d in range(dom.dim):
            xp = list(x)
            xm = list(x)
            xp[d] += h
            xm[d] -= h
            vp = objective.values(tuple(xp))
            vm = objective.values(tuple(xm))
            for i in range(objective.size):
                fd = (vp[i] - vm[i]) / (2 * h)
                scale = max(mpfr(1), abs(grads[i][d]))
                assert abs(fd - grads[i][d]) / scale < tol, (kind, i, d)


def test_residual_vector_sees_weight_scaling():
    """Scaling all weights moves the constant moment in the known way."""
    rng = random.Random(5)
    rule = _random_rule(rng, dm.SQUARE, degree=2)
    objective = objective_basis(dm.SQUARE, 2)
    base = residual_vector(rule, objective)
    doubled = rule.replace_orbits(tuple(
        dm.Orbit(o.sclass, o.params, 2 * o.weight) for o in rule.orbits))
    shifted = residual_vector(doubled, objective)
    # f_0 - 2 V w_0 = (f_0 - V w_0) - V w_0
    expect = base[0] - (objective.moments()[0] - base[0])
    assert abs(shifted[0] - expect) < mpfr(10) ** -28


def test_residual_reports_problem_sizes():
    rng = random.Random(6)
    rule = _random_rule(rng, dm.CUBE, degree=3)
    out = residual(rule)
    assert out.node_count == rule.node_count
    assert out.basis_size == objective_basis(dm.CUBE, 3).size
