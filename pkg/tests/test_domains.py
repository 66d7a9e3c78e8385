"""Domain geometry: symmetry classes, group structure, orbit expansion,
and the node-multiset compressor."""

import random

import pytest
from gmpy2 import mpfr

from symquad import domains as dm
from symquad.errors import DegenerateOrbit, NotSymmetric

from conftest import random_orbit

# Symmetry classes per domain: sid -> (orbit size, parameter count).
CLASS_TABLE = {
    dm.SQUARE: {"S1": (1, 0), "S2": (4, 1), "S3": (4, 1), "S4": (8, 2)},
    dm.CUBE: {"S1": (1, 0), "S2": (6, 1), "S3": (8, 1), "S4": (12, 1),
              "S5": (24, 2), "S6": (24, 2), "S7": (48, 3)},
    dm.PRISM: {"S1": (1, 0), "S2": (2, 1), "S3": (3, 1), "S4": (6, 2),
               "S5": (6, 2), "S6": (12, 3)},
    dm.PYRAMID: {"S1": (1, 1), "S2": (4, 2), "S3": (4, 2), "S4": (8, 3)},
    dm.TRIANGLE: {"S1": (1, 0), "S2": (3, 1), "S3": (6, 2)},
    dm.TETRAHEDRON: {"S1": (1, 0), "S2": (4, 1), "S3": (6, 1),
                     "S4": (12, 2), "S5": (24, 3)},
}

# numerator/denominator of each reference volume
VOLUMES = {
    dm.SQUARE: (4, 1), dm.CUBE: (8, 1), dm.PRISM: (4, 1),
    dm.PYRAMID: (8, 3), dm.TRIANGLE: (2, 1), dm.TETRAHEDRON: (4, 3),
}


@pytest.mark.parametrize("kind", dm.KINDS)
def test_symmetry_class_table(kind):
    dom = dm.domain(kind)
    table = {c.sid: (c.size, c.nparams) for c in dom.classes}
    assert table == CLASS_TABLE[kind]


@pytest.mark.parametrize("kind", dm.KINDS)
def test_group_order_matches_largest_class(kind):
    dom = dm.domain(kind)
    assert len(dom.group) == max(c.size for c in dom.classes)


@pytest.mark.parametrize("kind", dm.KINDS)
def test_group_is_closed_and_has_identity(kind):
    dom = dm.domain(kind)
    seen = {(g.mat, g.off) for g in dom.group}
    dim = dom.dim
    identity = (tuple(tuple(1 if i == j else 0 for j in range(dim))
                      for i in range(dim)), (0,) * dim)
    assert identity in seen
    for g in dom.group:
        for h in dom.group:
            mat = tuple(
                tuple(sum(g.mat[i][k] * h.mat[k][j] for k in range(dim))
                      for j in range(dim))
                for i in range(dim)
            )
            off = tuple(
                sum(g.mat[i][k] * h.off[k] for k in range(dim)) + g.off[i]
                for i in range(dim)
            )
            assert (mat, off) in seen


@pytest.mark.parametrize("kind", dm.KINDS)
def test_volume(kind):
    num, den = VOLUMES[kind]
    assert dm.domain(kind).volume() == mpfr(num) / den


def test_contains_is_strict():
    sq = dm.domain(dm.SQUARE)
    assert sq.contains((mpfr(0), mpfr(0)))
    assert not sq.contains((mpfr(1), mpfr(0)))
    assert not sq.contains((mpfr("0.5"), mpfr(-1)))

    tri = dm.domain(dm.TRIANGLE)
    assert tri.contains((mpfr("-0.5"), mpfr("-0.5")))
    assert not tri.contains((mpfr("-0.5"), mpfr("0.5")))   # x + y = 0 edge
    assert not tri.contains((mpfr(-1), mpfr("-0.5")))

    pyr = dm.domain(dm.PYRAMID)
    assert pyr.contains((mpfr(0), mpfr(0), mpfr("0.5")))
    # |x| must stay below (1 - z)/2
    assert not pyr.contains((mpfr("0.3"), mpfr(0), mpfr("0.5")))
    assert pyr.contains((mpfr("0.2"), mpfr(0), mpfr("0.5")))

    tet = dm.domain(dm.TETRAHEDRON)
    assert tet.contains((mpfr("-0.7"), mpfr("-0.7"), mpfr("-0.7")))
    assert not tet.contains((mpfr("-0.3"), mpfr("-0.3"), mpfr("-0.3")))


@pytest.mark.parametrize("kind", dm.KINDS)
def test_orbit_expansion_size_and_interiority(kind):
    rng = random.Random(1234)
    dom = dm.domain(kind)
    for cls in dom.classes:
        for _ in range(5):
            orbit = random_orbit(rng, cls)
            nodes = orbit.nodes()
            assert len(nodes) == cls.size
            for x in nodes:
                assert dom.contains(x)
            for i in range(len(nodes)):
                for j in range(i + 1, len(nodes)):
                    d = max(abs(a - b) for a, b in zip(nodes[i], nodes[j]))
                    assert d > mpfr(2) ** -56


@pytest.mark.parametrize("kind", dm.KINDS)
def test_compress_expand_identity(kind):
    rng = random.Random(99)
    dom = dm.domain(kind)
    for cls in dom.classes:
        for _ in range(10):
            orbit = random_orbit(rng, cls)
            rule = dm.QuadRule(dom, 1, (orbit,))
            pts, wts = rule.nodes_weights()
            order = list(range(len(pts)))
            rng.shuffle(order)
            back = dm.compress_nodes([pts[i] for i in order],
                                     [wts[i] for i in order], dom)
            assert len(back.orbits) == 1
            got = back.orbits[0]
            assert got.sid == cls.sid
            assert all(abs(a - b) < mpfr(2) ** -90
                       for a, b in zip(got.params, orbit.params))
            assert abs(got.weight - orbit.weight) < mpfr(2) ** -90


def test_compress_rejects_asymmetric_sets():
    dom = dm.domain(dm.SQUARE)
    orbit = random_orbit(random.Random(7), dom.class_by_id("S4"))
    pts, wts = dm.QuadRule(dom, 1, (orbit,)).nodes_weights()
    with pytest.raises(NotSymmetric):
        dm.compress_nodes(pts[:-1], wts[:-1], dom)
    # unequal weights across one orbit are just as asymmetric
    wts2 = list(wts)
    wts2[0] *= 2
    with pytest.raises(NotSymmetric):
        dm.compress_nodes(pts, wts2, dom)


def test_compress_merges_coincident_nodes():
    dom = dm.domain(dm.SQUARE)
    orbit = random_orbit(random.Random(11), dom.class_by_id("S2"))
    pts, wts = dm.QuadRule(dom, 1, (orbit,)).nodes_weights()
    doubled = dm.compress_nodes(pts + pts, [w / 2 for w in wts + wts], dom)
    assert doubled.node_count == orbit.size
    assert abs(doubled.orbits[0].weight - orbit.weight) < mpfr(2) ** -90


@pytest.mark.parametrize("kind", dm.KINDS)
def test_canonical_params_invariant_under_group(kind):
    rng = random.Random(4321)
    dom = dm.domain(kind)
    for cls in dom.classes:
        orbit = random_orbit(rng, cls)
        rep = orbit.rep_point()
        for g in dom.group:
            params = dm.canonical_params(cls, g(rep))
            assert all(abs(a - b) < mpfr(2) ** -90
                       for a, b in zip(params, orbit.params))


def test_make_orbit_validation():
    sq = dm.domain(dm.SQUARE)
    s2, s4 = sq.class_by_id("S2"), sq.class_by_id("S4")
    with pytest.raises(DegenerateOrbit):
        dm.make_orbit(s2, (mpfr("1.5"),), mpfr(1))
    with pytest.raises(ValueError):
        dm.make_orbit(s2, (mpfr("0.5"),), mpfr(0))
    with pytest.raises(ValueError):
        dm.make_orbit(s2, (mpfr("0.5"), mpfr("0.5")), mpfr(1))
    # equal S4 parameters collapse pairs of nodes onto each other
    with pytest.raises(DegenerateOrbit):
        dm.make_orbit(s4, (mpfr("0.37"), mpfr("0.37")), mpfr(1))


def test_node_index_nearest_lookup():
    pts = [(mpfr(i) / 10, mpfr(0)) for i in range(10)]
    index = dm._NodeIndex(pts)
    hits = index.near((mpfr("0.31"), mpfr(0)), mpfr("0.02"))
    assert [i for _, i in hits] == [3]
    assert index.near((mpfr("0.35"), mpfr("0.5")), mpfr("0.02")) == []
