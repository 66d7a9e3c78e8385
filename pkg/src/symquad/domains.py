"""Reference domains, symmetry groups, orbits, and symmetric quadrature rules.

Coordinates follow the usual reference conventions: the square and cube are
(-1, 1)^d; the triangle has vertices (-1,-1), (1,-1), (-1,1); the prism is
that triangle extruded to |z| < 1; the tetrahedron has vertices (-1,-1,-1),
(1,-1,-1), (-1,1,-1), (-1,-1,1); the pyramid has base corners (+-1, +-1, -1)
and apex (0, 0, 1).

A symmetry class describes one family of orbits of the domain's symmetry
group: the shape of the fixed locus, the number of free parameters, and the
node count of a generic orbit.  Orbit parameters are stored normalized, so
every parameter lives in the open unit interval (0, 1); affine or collapsed
maps take them to actual coordinates.  A full quadrature rule is a list of
orbits, each carrying one weight shared by all of its nodes.
"""

import bisect
from fractions import Fraction

from gmpy2 import mpfr

from .errors import DegenerateOrbit, NoProjection, NotSymmetric
from .precision import current_precision, vector_norm2

SQUARE = "square"
CUBE = "cube"
PRISM = "prism"
PYRAMID = "pyramid"
TRIANGLE = "triangle"
TETRAHEDRON = "tetrahedron"

KINDS = (SQUARE, CUBE, PRISM, PYRAMID, TRIANGLE, TETRAHEDRON)


def _rat_exact(n, d=1):
    return Fraction(n, d)


def _rat_float(n, d=1):
    return mpfr(n) / d if d != 1 else mpfr(n)


class AffineMap:
    """Affine symmetry with a small integer matrix and integer offset.

    Applying the map keeps Fractions exact and mpfr values correct to one
    rounding per output coordinate.
    """

    __slots__ = ("mat", "off")

    def __init__(self, mat, off):
        self.mat = tuple(tuple(int(v) for v in row) for row in mat)
        self.off = tuple(int(v) for v in off)

    def __call__(self, point):
        out = []
        for row, b in zip(self.mat, self.off):
            s = b
            for m, x in zip(row, point):
                if m == 1:
                    s = s + x
                elif m == -1:
                    s = s - x
                elif m:
                    s = s + m * x
            out.append(s)
        return tuple(out)

    def __repr__(self):
        return "AffineMap(%r, %r)" % (self.mat, self.off)


def _signed_perm_maps(dim, fixed_tail=0):
    """Signed permutations of the first ``dim`` coordinates, identity on the
    remaining ``fixed_tail`` coordinates."""
    import itertools

    total = dim + fixed_tail
    maps = []
    for perm in itertools.permutations(range(dim)):
        for signs in itertools.product((1, -1), repeat=dim):
            mat = [[0] * total for _ in range(total)]
            for i in range(dim):
                mat[i][perm[i]] = signs[i]
            for i in range(dim, total):
                mat[i][i] = 1
            maps.append(AffineMap(mat, [0] * total))
    return maps


def _simplex_maps(vertices):
    """Affine maps permuting the vertices of a right simplex with edge
    matrix 2*I at vertex 0."""
    import itertools

    dim = len(vertices) - 1
    maps = []
    for perm in itertools.permutations(range(len(vertices))):
        imgs = [vertices[p] for p in perm]
        mat = [[0] * dim for _ in range(dim)]
        for j in range(dim):
            for i in range(dim):
                diff = imgs[j + 1][i] - imgs[0][i]
                assert diff % 2 == 0
                mat[i][j] = diff // 2
        off = []
        for i in range(dim):
            acc = imgs[0][i]
            for j in range(dim):
                acc -= mat[i][j] * vertices[0][j]
            off.append(acc)
        maps.append(AffineMap(mat, off))
    return maps


def _extruded_maps(base_maps, z_signs=(1, -1)):
    """Extend 2D maps to 3D, combined with z sign flips."""
    maps = []
    for g in base_maps:
        for sz in z_signs:
            mat = [list(row) + [0] for row in g.mat]
            mat.append([0, 0, sz])
            maps.append(AffineMap(mat, list(g.off) + [0]))
    return maps


class SymmetryClass:
    """One family of symmetry orbits on a domain.

    Attributes
    ----------
    sid : str
        Short identifier, "S1", "S2", ... in order of declaration.
    nparams : int
        Number of free normalized parameters of an orbit.
    size : int
        Node count of a generic (non-degenerate) orbit.
    pieces : tuple
        Convex pieces (point / segment / planar polygon vertex tuples, in
        exact rational coordinates) whose union is the fixed locus; empty
        for the generic class, which is never a projection target.
    """

    def __init__(self, sid, nparams, size, rep, jac, inv, tpl, sample, pieces):
        self.sid = sid
        self.nparams = nparams
        self.size = size
        self._rep = rep
        self._jac = jac
        self._inv = inv
        self._tpl = tpl
        self.sample = sample
        self.pieces = pieces
        self.domain = None  # set by Domain
        self.transversal = None  # set by Domain

    def __repr__(self):
        return "<%s %s>" % (self.domain.kind if self.domain else "?", self.sid)

    def rep_point(self, params):
        """Representative node for normalized parameters.

        Works for mpfr parameters (ambient precision) and for exact
        Fractions, which the group machinery uses at build time.
        """
        exact = bool(params) and isinstance(params[0], Fraction)
        return self._rep(params, _rat_exact if exact else _rat_float)

    def rep_point_exact(self, params):
        return self._rep(params, _rat_exact)

    def rep_jacobian(self, params):
        """Rows d(point)/d(param_k), one row per parameter."""
        return self._jac(params)

    def params_from_point(self, point):
        """Normalized parameters of a point lying on the canonical piece of
        the fixed locus.  No validation; see canonical_params."""
        exact = isinstance(point[0], Fraction) or isinstance(point[0], int)
        return self._inv(point, _rat_exact if exact else _rat_float)

    def template(self, point, tol):
        """True when the point matches the canonical arrangement of this
        class up to ``tol`` in each coordinate comparison."""
        exact = isinstance(point[0], Fraction)
        return self._tpl(point, tol, _rat_exact if exact else _rat_float)


class Domain:
    """A reference domain with its symmetry group and orbit classes."""

    def __init__(self, kind, dim, group, classes):
        self.kind = kind
        self.dim = dim
        self.group = tuple(group)
        self.classes = tuple(classes)
        self._by_sid = {c.sid: c for c in classes}
        for c in classes:
            c.domain = self
            c.transversal = self._build_transversal(c)

    def __repr__(self):
        return "<Domain %s>" % self.kind

    def _build_transversal(self, cls):
        # Apply every group element to a generic rational point of the
        # class and keep the first element reaching each distinct image.
        rep = cls.rep_point_exact(cls.sample)
        seen = {}
        order = []
        for g in self.group:
            img = g(rep)
            if img not in seen:
                seen[img] = g
                order.append(g)
        if len(order) != cls.size:
            raise AssertionError(
                "%s %s: expected orbit size %d, found %d"
                % (self.kind, cls.sid, cls.size, len(order))
            )
        return tuple(order)

    def class_by_id(self, sid):
        try:
            return self._by_sid[sid]
        except KeyError:
            raise KeyError("%s has no symmetry class %r" % (self.kind, sid))

    def volume(self):
        """Measure of the domain as an mpfr at ambient precision."""
        if self.kind in (SQUARE, PRISM):
            return mpfr(4)
        if self.kind == CUBE:
            return mpfr(8)
        if self.kind == PYRAMID:
            return mpfr(8) / 3
        if self.kind == TRIANGLE:
            return mpfr(2)
        if self.kind == TETRAHEDRON:
            return mpfr(4) / 3
        raise AssertionError(self.kind)

    def contains(self, point, margin=0):
        """Strict interior test, shrunk by ``margin`` on every face."""
        if self.kind in (SQUARE, CUBE):
            return all(abs(x) < 1 - margin for x in point)
        if self.kind == TRIANGLE:
            x, y = point
            return x > -1 + margin and y > -1 + margin and x + y < -margin
        if self.kind == PRISM:
            x, y, z = point
            return (
                x > -1 + margin
                and y > -1 + margin
                and x + y < -margin
                and abs(z) < 1 - margin
            )
        if self.kind == TETRAHEDRON:
            x, y, z = point
            return (
                x > -1 + margin
                and y > -1 + margin
                and z > -1 + margin
                and x + y + z < -1 - margin
            )
        if self.kind == PYRAMID:
            x, y, z = point
            if not abs(z) < 1 - margin:
                return False
            half = (1 - z) / 2
            return abs(x) < half - margin and abs(y) < half - margin
        raise AssertionError(self.kind)


def _build_square():
    group = _signed_perm_maps(2)
    classes = [
        SymmetryClass(
            "S1", 0, 1,
            rep=lambda p, r: (0, 0),
            jac=lambda p: (),
            inv=lambda x, r: (),
            tpl=lambda x, t, r: abs(x[0]) <= t and abs(x[1]) <= t,
            sample=(),
            pieces=(((0, 0),),),
        ),
        SymmetryClass(
            "S2", 1, 4,
            rep=lambda p, r: (2 * p[0] - 1, 0),
            jac=lambda p: ((2, 0),),
            inv=lambda x, r: ((x[0] + 1) / 2,),
            tpl=lambda x, t, r: abs(x[1]) <= t and x[0] > t,
            sample=(Fraction(13, 29),),
            pieces=(((-1, 0), (1, 0)), ((0, -1), (0, 1))),
        ),
        SymmetryClass(
            "S3", 1, 4,
            rep=lambda p, r: (2 * p[0] - 1, 2 * p[0] - 1),
            jac=lambda p: ((2, 2),),
            inv=lambda x, r: ((x[0] + 1) / 2,),
            tpl=lambda x, t, r: abs(x[0] - x[1]) <= t and x[0] > t,
            sample=(Fraction(13, 29),),
            pieces=(((-1, -1), (1, 1)), ((-1, 1), (1, -1))),
        ),
        SymmetryClass(
            "S4", 2, 8,
            rep=lambda p, r: (2 * p[0] - 1, 2 * p[1] - 1),
            jac=lambda p: ((2, 0), (0, 2)),
            inv=lambda x, r: ((x[0] + 1) / 2, (x[1] + 1) / 2),
            tpl=lambda x, t, r: x[0] - x[1] > t and x[1] > t,
            sample=(Fraction(13, 29), Fraction(17, 31)),
            pieces=(),
        ),
    ]
    return Domain(SQUARE, 2, group, classes)


def _build_cube():
    group = _signed_perm_maps(3)
    classes = [
        SymmetryClass(
            "S1", 0, 1,
            rep=lambda p, r: (0, 0, 0),
            jac=lambda p: (),
            inv=lambda x, r: (),
            tpl=lambda x, t, r: all(abs(c) <= t for c in x),
            sample=(),
            pieces=(((0, 0, 0),),),
        ),
        SymmetryClass(
            "S2", 1, 6,
            rep=lambda p, r: (2 * p[0] - 1, 0, 0),
            jac=lambda p: ((2, 0, 0),),
            inv=lambda x, r: ((x[0] + 1) / 2,),
            tpl=lambda x, t, r: abs(x[1]) <= t and abs(x[2]) <= t and x[0] > t,
            sample=(Fraction(13, 29),),
            pieces=(
                ((-1, 0, 0), (1, 0, 0)),
                ((0, -1, 0), (0, 1, 0)),
                ((0, 0, -1), (0, 0, 1)),
            ),
        ),
        SymmetryClass(
            "S3", 1, 8,
            rep=lambda p, r: (2 * p[0] - 1,) * 3,
            jac=lambda p: ((2, 2, 2),),
            inv=lambda x, r: ((x[0] + 1) / 2,),
            tpl=lambda x, t, r: (
                abs(x[0] - x[1]) <= t and abs(x[0] - x[2]) <= t and x[0] > t
            ),
            sample=(Fraction(13, 29),),
            pieces=(
                ((-1, -1, -1), (1, 1, 1)),
                ((-1, -1, 1), (1, 1, -1)),
                ((-1, 1, -1), (1, -1, 1)),
                ((-1, 1, 1), (1, -1, -1)),
            ),
        ),
        SymmetryClass(
            "S4", 1, 12,
            rep=lambda p, r: (2 * p[0] - 1, 2 * p[0] - 1, 0),
            jac=lambda p: ((2, 2, 0),),
            inv=lambda x, r: ((x[0] + 1) / 2,),
            tpl=lambda x, t, r: (
                abs(x[0] - x[1]) <= t and abs(x[2]) <= t and x[0] > t
            ),
            sample=(Fraction(13, 29),),
            pieces=(
                ((-1, -1, 0), (1, 1, 0)),
                ((-1, 1, 0), (1, -1, 0)),
                ((-1, 0, -1), (1, 0, 1)),
                ((-1, 0, 1), (1, 0, -1)),
                ((0, -1, -1), (0, 1, 1)),
                ((0, -1, 1), (0, 1, -1)),
            ),
        ),
        SymmetryClass(
            "S5", 2, 24,
            rep=lambda p, r: (2 * p[0] - 1, 2 * p[0] - 1, 2 * p[1] - 1),
            jac=lambda p: ((2, 2, 0), (0, 0, 2)),
            inv=lambda x, r: ((x[0] + 1) / 2, (x[2] + 1) / 2),
            tpl=lambda x, t, r: (
                abs(x[0] - x[1]) <= t
                and x[0] > t
                and x[2] > t
                and abs(x[2] - x[0]) > t
            ),
            sample=(Fraction(13, 29), Fraction(17, 31)),
            pieces=(
                ((-1, -1, -1), (1, 1, -1), (1, 1, 1), (-1, -1, 1)),
                ((-1, 1, -1), (1, -1, -1), (1, -1, 1), (-1, 1, 1)),
                ((-1, -1, -1), (1, -1, 1), (1, 1, 1), (-1, 1, -1)),
                ((-1, -1, 1), (1, -1, -1), (1, 1, -1), (-1, 1, 1)),
                ((-1, -1, -1), (1, -1, -1), (1, 1, 1), (-1, 1, 1)),
                ((-1, -1, 1), (1, -1, 1), (1, 1, -1), (-1, 1, -1)),
            ),
        ),
        SymmetryClass(
            "S6", 2, 24,
            rep=lambda p, r: (2 * p[0] - 1, 2 * p[1] - 1, 0),
            jac=lambda p: ((2, 0, 0), (0, 2, 0)),
            inv=lambda x, r: ((x[0] + 1) / 2, (x[1] + 1) / 2),
            tpl=lambda x, t, r: (
                abs(x[2]) <= t and x[0] - x[1] > t and x[1] > t
            ),
            sample=(Fraction(13, 29), Fraction(17, 31)),
            pieces=(
                ((-1, -1, 0), (1, -1, 0), (1, 1, 0), (-1, 1, 0)),
                ((-1, 0, -1), (1, 0, -1), (1, 0, 1), (-1, 0, 1)),
                ((0, -1, -1), (0, 1, -1), (0, 1, 1), (0, -1, 1)),
            ),
        ),
        SymmetryClass(
            "S7", 3, 48,
            rep=lambda p, r: (2 * p[0] - 1, 2 * p[1] - 1, 2 * p[2] - 1),
            jac=lambda p: ((2, 0, 0), (0, 2, 0), (0, 0, 2)),
            inv=lambda x, r: tuple((c + 1) / 2 for c in x),
            tpl=lambda x, t, r: (
                x[0] - x[1] > t and x[1] - x[2] > t and x[2] > t
            ),
            sample=(Fraction(13, 29), Fraction(17, 31), Fraction(19, 37)),
            pieces=(),
        ),
    ]
    return Domain(CUBE, 3, group, classes)


def _build_pyramid():
    group = _signed_perm_maps(2, fixed_tail=1)
    classes = [
        SymmetryClass(
            "S1", 1, 1,
            rep=lambda p, r: (0, 0, 2 * p[0] - 1),
            jac=lambda p: ((0, 0, 2),),
            inv=lambda x, r: ((x[2] + 1) / 2,),
            tpl=lambda x, t, r: abs(x[0]) <= t and abs(x[1]) <= t,
            sample=(Fraction(13, 29),),
            pieces=(((0, 0, -1), (0, 0, 1)),),
        ),
        SymmetryClass(
            "S2", 2, 4,
            rep=lambda p, r: (
                (2 * p[0] - 1) * (1 - p[1]),
                0,
                2 * p[1] - 1,
            ),
            jac=lambda p: (
                (2 * (1 - p[1]), 0, 0),
                (-(2 * p[0] - 1), 0, 2),
            ),
            inv=lambda x, r: (
                (x[0] / ((1 - x[2]) / 2) + 1) / 2,
                (x[2] + 1) / 2,
            ),
            tpl=lambda x, t, r: abs(x[1]) <= t and x[0] > t,
            sample=(Fraction(13, 29), Fraction(17, 31)),
            pieces=(
                ((-1, 0, -1), (1, 0, -1), (0, 0, 1)),
                ((0, -1, -1), (0, 1, -1), (0, 0, 1)),
            ),
        ),
        SymmetryClass(
            "S3", 2, 4,
            rep=lambda p, r: (
                (2 * p[0] - 1) * (1 - p[1]),
                (2 * p[0] - 1) * (1 - p[1]),
                2 * p[1] - 1,
            ),
            jac=lambda p: (
                (2 * (1 - p[1]), 2 * (1 - p[1]), 0),
                (-(2 * p[0] - 1), -(2 * p[0] - 1), 2),
            ),
            inv=lambda x, r: (
                (x[0] / ((1 - x[2]) / 2) + 1) / 2,
                (x[2] + 1) / 2,
            ),
            tpl=lambda x, t, r: abs(x[0] - x[1]) <= t and x[0] > t,
            sample=(Fraction(13, 29), Fraction(17, 31)),
            pieces=(
                ((-1, -1, -1), (1, 1, -1), (0, 0, 1)),
                ((-1, 1, -1), (1, -1, -1), (0, 0, 1)),
            ),
        ),
        SymmetryClass(
            "S4", 3, 8,
            rep=lambda p, r: (
                (2 * p[0] - 1) * (1 - p[2]),
                (2 * p[1] - 1) * (1 - p[2]),
                2 * p[2] - 1,
            ),
            jac=lambda p: (
                (2 * (1 - p[2]), 0, 0),
                (0, 2 * (1 - p[2]), 0),
                (-(2 * p[0] - 1), -(2 * p[1] - 1), 2),
            ),
            inv=lambda x, r: (
                (x[0] / ((1 - x[2]) / 2) + 1) / 2,
                (x[1] / ((1 - x[2]) / 2) + 1) / 2,
                (x[2] + 1) / 2,
            ),
            tpl=lambda x, t, r: x[0] - x[1] > t and x[1] > t,
            sample=(Fraction(13, 29), Fraction(17, 31), Fraction(19, 37)),
            pieces=(),
        ),
    ]
    return Domain(PYRAMID, 3, group, classes)


_TRI_VERTS = ((-1, -1), (1, -1), (-1, 1))
_TET_VERTS = ((-1, -1, -1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))


def _build_triangle():
    group = _simplex_maps(_TRI_VERTS)
    classes = [
        SymmetryClass(
            "S1", 0, 1,
            rep=lambda p, r: (-r(1, 3), -r(1, 3)),
            jac=lambda p: (),
            inv=lambda x, r: (),
            tpl=lambda x, t, r: (
                abs(x[0] + r(1, 3)) <= t and abs(x[1] + r(1, 3)) <= t
            ),
            sample=(),
            pieces=(((Fraction(-1, 3), Fraction(-1, 3)),),),
        ),
        SymmetryClass(
            "S2", 1, 3,
            rep=lambda p, r: (p[0] - 1, p[0] - 1),
            jac=lambda p: ((1, 1),),
            inv=lambda x, r: (x[0] + 1,),
            tpl=lambda x, t, r: abs(x[0] - x[1]) <= t,
            sample=(Fraction(13, 29),),
            pieces=(
                ((-1, -1), (0, 0)),
                ((1, -1), (-1, 0)),
                ((-1, 1), (0, -1)),
            ),
        ),
        SymmetryClass(
            "S3", 2, 6,
            rep=lambda p, r: (-1 + 2 * p[0], -1 + 2 * p[1] * (1 - p[0])),
            jac=lambda p: ((2, -2 * p[1]), (0, 2 * (1 - p[0]))),
            inv=lambda x, r: ((x[0] + 1) / 2, (x[1] + 1) / (1 - x[0])),
            tpl=lambda x, t, r: True,
            sample=(Fraction(13, 29), Fraction(17, 31)),
            pieces=(),
        ),
    ]
    return Domain(TRIANGLE, 2, group, classes)


def _build_prism():
    group = _extruded_maps(_simplex_maps(_TRI_VERTS))
    third = Fraction(-1, 3)
    classes = [
        SymmetryClass(
            "S1", 0, 1,
            rep=lambda p, r: (-r(1, 3), -r(1, 3), 0),
            jac=lambda p: (),
            inv=lambda x, r: (),
            tpl=lambda x, t, r: (
                abs(x[0] + r(1, 3)) <= t
                and abs(x[1] + r(1, 3)) <= t
                and abs(x[2]) <= t
            ),
            sample=(),
            pieces=(((third, third, 0),),),
        ),
        SymmetryClass(
            "S2", 1, 2,
            rep=lambda p, r: (-r(1, 3), -r(1, 3), 2 * p[0] - 1),
            jac=lambda p: ((0, 0, 2),),
            inv=lambda x, r: ((x[2] + 1) / 2,),
            tpl=lambda x, t, r: (
                abs(x[0] + r(1, 3)) <= t
                and abs(x[1] + r(1, 3)) <= t
                and x[2] > t
            ),
            sample=(Fraction(13, 29),),
            pieces=(((third, third, -1), (third, third, 1)),),
        ),
        SymmetryClass(
            "S3", 1, 3,
            rep=lambda p, r: (p[0] - 1, p[0] - 1, 0),
            jac=lambda p: ((1, 1, 0),),
            inv=lambda x, r: (x[0] + 1,),
            tpl=lambda x, t, r: abs(x[0] - x[1]) <= t and abs(x[2]) <= t,
            sample=(Fraction(13, 29),),
            pieces=(
                ((-1, -1, 0), (0, 0, 0)),
                ((1, -1, 0), (-1, 0, 0)),
                ((-1, 1, 0), (0, -1, 0)),
            ),
        ),
        SymmetryClass(
            "S4", 2, 6,
            rep=lambda p, r: (p[0] - 1, p[0] - 1, 2 * p[1] - 1),
            jac=lambda p: ((1, 1, 0), (0, 0, 2)),
            inv=lambda x, r: (x[0] + 1, (x[2] + 1) / 2),
            tpl=lambda x, t, r: abs(x[0] - x[1]) <= t and x[2] > t,
            sample=(Fraction(13, 29), Fraction(17, 31)),
            pieces=(
                ((-1, -1, -1), (0, 0, -1), (0, 0, 1), (-1, -1, 1)),
                ((1, -1, -1), (-1, 0, -1), (-1, 0, 1), (1, -1, 1)),
                ((-1, 1, -1), (0, -1, -1), (0, -1, 1), (-1, 1, 1)),
            ),
        ),
        SymmetryClass(
            "S5", 2, 6,
            rep=lambda p, r: (
                -1 + 2 * p[0],
                -1 + 2 * p[1] * (1 - p[0]),
                0,
            ),
            jac=lambda p: ((2, -2 * p[1], 0), (0, 2 * (1 - p[0]), 0)),
            inv=lambda x, r: ((x[0] + 1) / 2, (x[1] + 1) / (1 - x[0])),
            tpl=lambda x, t, r: abs(x[2]) <= t,
            sample=(Fraction(13, 29), Fraction(17, 31)),
            pieces=(((-1, -1, 0), (1, -1, 0), (-1, 1, 0)),),
        ),
        SymmetryClass(
            "S6", 3, 12,
            rep=lambda p, r: (
                -1 + 2 * p[0],
                -1 + 2 * p[1] * (1 - p[0]),
                2 * p[2] - 1,
            ),
            jac=lambda p: (
                (2, -2 * p[1], 0),
                (0, 2 * (1 - p[0]), 0),
                (0, 0, 2),
            ),
            inv=lambda x, r: (
                (x[0] + 1) / 2,
                (x[1] + 1) / (1 - x[0]),
                (x[2] + 1) / 2,
            ),
            tpl=lambda x, t, r: x[2] > t,
            sample=(Fraction(13, 29), Fraction(17, 31), Fraction(19, 37)),
            pieces=(),
        ),
    ]
    return Domain(PRISM, 3, group, classes)


def _build_tetrahedron():
    group = _simplex_maps(_TET_VERTS)
    classes = [
        SymmetryClass(
            "S1", 0, 1,
            rep=lambda p, r: (-r(1, 2), -r(1, 2), -r(1, 2)),
            jac=lambda p: (),
            inv=lambda x, r: (),
            tpl=lambda x, t, r: all(abs(c + r(1, 2)) <= t for c in x),
            sample=(),
            pieces=(((Fraction(-1, 2),) * 3,),),
        ),
        SymmetryClass(
            "S2", 1, 4,
            rep=lambda p, r: (-1 + r(2, 3) * p[0],) * 3,
            jac=lambda p: ((mpfr(2) / 3,) * 3,),
            inv=lambda x, r: ((x[0] + 1) * r(3, 2),),
            tpl=lambda x, t, r: (
                abs(x[0] - x[1]) <= t and abs(x[0] - x[2]) <= t
            ),
            sample=(Fraction(13, 29),),
            pieces=(
                ((-1, -1, -1), (Fraction(-1, 3),) * 3),
                ((1, -1, -1), (-1, Fraction(-1, 3), Fraction(-1, 3))),
                ((-1, 1, -1), (Fraction(-1, 3), -1, Fraction(-1, 3))),
                ((-1, -1, 1), (Fraction(-1, 3), Fraction(-1, 3), -1)),
            ),
        ),
        SymmetryClass(
            "S3", 1, 6,
            rep=lambda p, r: (-p[0], -1 + p[0], -1 + p[0]),
            jac=lambda p: ((-1, 1, 1),),
            inv=lambda x, r: (-x[0],),
            tpl=lambda x, t, r: abs(x[1] - x[2]) <= t,
            sample=(Fraction(13, 29),),
            pieces=(
                ((0, -1, -1), (-1, 0, 0)),
                ((-1, 0, -1), (0, -1, 0)),
                ((-1, -1, 0), (0, 0, -1)),
            ),
        ),
        SymmetryClass(
            "S4", 2, 12,
            rep=lambda p, r: (
                -1 + p[0] * (1 - p[1]),
                -1 + p[0] * (1 - p[1]),
                -1 + 2 * p[0] * p[1],
            ),
            jac=lambda p: (
                (1 - p[1], 1 - p[1], 2 * p[1]),
                (-p[0], -p[0], 2 * p[0]),
            ),
            inv=lambda x, r: (
                (x[0] + 1) + (x[2] + 1) / 2,
                ((x[2] + 1) / 2) / ((x[0] + 1) + (x[2] + 1) / 2),
            ),
            tpl=lambda x, t, r: abs(x[0] - x[1]) <= t,
            sample=(Fraction(13, 29), Fraction(17, 31)),
            pieces=(
                ((-1, -1, -1), (0, 0, -1), (-1, -1, 1)),
                ((-1, -1, -1), (0, -1, 0), (-1, 1, -1)),
                ((-1, -1, -1), (-1, 0, 0), (1, -1, -1)),
                ((-1, 1, -1), (-1, -1, 1), (0, -1, -1)),
                ((1, -1, -1), (-1, -1, 1), (-1, 0, -1)),
                ((1, -1, -1), (-1, 1, -1), (-1, -1, 0)),
            ),
        ),
        SymmetryClass(
            "S5", 3, 24,
            rep=lambda p, r: (
                -1 + 2 * p[0] * (1 - p[1]) * (1 - p[2]),
                -1 + 2 * p[1] * (1 - p[2]),
                -1 + 2 * p[2],
            ),
            jac=lambda p: (
                (2 * (1 - p[1]) * (1 - p[2]), 0, 0),
                (-2 * p[0] * (1 - p[2]), 2 * (1 - p[2]), 0),
                (-2 * p[0] * (1 - p[1]), -2 * p[1], 2),
            ),
            inv=lambda x, r: (
                (x[0] + 1) / (-x[1] - x[2]),
                (x[1] + 1) / (1 - x[2]),
                (x[2] + 1) / 2,
            ),
            tpl=lambda x, t, r: True,
            sample=(Fraction(13, 29), Fraction(17, 31), Fraction(19, 37)),
            pieces=(),
        ),
    ]
    return Domain(TETRAHEDRON, 3, group, classes)


_BUILDERS = {
    SQUARE: _build_square,
    CUBE: _build_cube,
    PRISM: _build_prism,
    PYRAMID: _build_pyramid,
    TRIANGLE: _build_triangle,
    TETRAHEDRON: _build_tetrahedron,
}

_DOMAINS = {}


def domain(kind):
    """The singleton Domain of the given kind."""
    if kind not in _BUILDERS:
        raise KeyError("unknown domain kind %r" % (kind,))
    dom = _DOMAINS.get(kind)
    if dom is None:
        dom = _BUILDERS[kind]()
        _DOMAINS[kind] = dom
    return dom


def coincidence_threshold():
    """Distance below which two nodes count as coincident, at ambient
    precision."""
    return mpfr(2) ** (-(current_precision() // 2))


def _dist(a, b):
    return vector_norm2([x - y for x, y in zip(a, b)])


def canonical_params(cls, point, tol=None):
    """Normalized parameters of the orbit through ``point`` in class ``cls``.

    The point may sit anywhere on the class locus; its group images are
    searched for the canonical arrangement and the lexicographically largest
    match is inverted.  Raises NoProjection when no image matches, which for
    an on-locus point means the orbit is degenerate for this class.
    """
    if tol is None:
        tol = coincidence_threshold() / 2
    matches = []
    for g in cls.domain.group:
        img = g(point)
        if cls.template(img, tol):
            matches.append(tuple(mpfr(c) for c in img))
    if not matches:
        raise NoProjection(
            "%s %s: no canonical image within %s"
            % (cls.domain.kind, cls.sid, tol)
        )
    best = max(matches)
    return tuple(mpfr(v) for v in cls.params_from_point(best))


class Orbit:
    """A symmetry orbit with one shared weight.

    Create through make_orbit, which canonicalizes parameters and validates
    that the expansion is non-degenerate and strictly interior.
    """

    __slots__ = ("sclass", "params", "weight")

    def __init__(self, sclass, params, weight):
        self.sclass = sclass
        self.params = params
        self.weight = weight

    @property
    def size(self):
        return self.sclass.size

    @property
    def sid(self):
        return self.sclass.sid

    def rep_point(self):
        return self.sclass.rep_point(self.params)

    def nodes(self):
        rep = self.sclass.rep_point(self.params)
        return [g(rep) for g in self.sclass.transversal]

    def __repr__(self):
        return "Orbit(%s, params=%s, w=%s)" % (
            self.sid,
            tuple(str(p) for p in self.params),
            self.weight,
        )


def make_orbit(sclass, params, weight, canonicalize=True):
    """Build a validated orbit from normalized parameters and a weight.

    Raises DegenerateOrbit when parameters leave the open unit cube, when
    expanded nodes coincide within the coincidence threshold, or when any
    node leaves the open domain.  ValueError for a non-positive weight.
    """
    params = tuple(mpfr(p) for p in params)
    weight = mpfr(weight)
    if len(params) != sclass.nparams:
        raise ValueError(
            "%s expects %d parameters, got %d"
            % (sclass.sid, sclass.nparams, len(params))
        )
    if not weight > 0:
        raise ValueError("orbit weight must be positive, got %s" % weight)
    for p in params:
        if not (0 < p < 1):
            raise DegenerateOrbit(
                "%s parameter %s outside the open unit interval"
                % (sclass.sid, p)
            )
    rep = sclass.rep_point(params)
    dom = sclass.domain
    if not dom.contains(rep):
        raise DegenerateOrbit(
            "%s representative %s is not strictly interior"
            % (sclass.sid, tuple(str(c) for c in rep))
        )
    thr = coincidence_threshold()
    nodes = [g(rep) for g in sclass.transversal]
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            if _dist(nodes[i], nodes[j]) < thr:
                raise DegenerateOrbit(
                    "%s orbit nodes coincide at parameters %s"
                    % (sclass.sid, tuple(str(p) for p in params))
                )
    if canonicalize:
        try:
            params = canonical_params(sclass, rep)
        except NoProjection:
            raise DegenerateOrbit(
                "%s parameters %s admit no canonical arrangement"
                % (sclass.sid, tuple(str(p) for p in params))
            )
        for p in params:
            if not (0 < p < 1):
                raise DegenerateOrbit(
                    "%s canonical parameter %s outside the open interval"
                    % (sclass.sid, p)
                )
    return Orbit(sclass, params, weight)


class QuadRule:
    """A fully symmetric quadrature rule: a list of weighted orbits."""

    def __init__(self, domain_, degree, orbits):
        self.domain = domain_
        self.degree = int(degree)
        self.orbits = tuple(orbits)

    @property
    def node_count(self):
        return sum(o.size for o in self.orbits)

    def nodes_weights(self):
        """Expanded node list and matching weight list."""
        pts, wts = [], []
        for o in self.orbits:
            for x in o.nodes():
                pts.append(x)
                wts.append(o.weight)
        return pts, wts

    def weight_sum(self):
        acc = mpfr(0)
        for o in self.orbits:
            acc += o.size * o.weight
        return acc

    def counts_by_class(self):
        counts = {}
        for o in self.orbits:
            counts[o.sid] = counts.get(o.sid, 0) + 1
        return counts

    def replace_orbits(self, orbits):
        return QuadRule(self.domain, self.degree, orbits)

    def __repr__(self):
        return "QuadRule(%s, q=%d, %d orbits, %d nodes)" % (
            self.domain.kind,
            self.degree,
            len(self.orbits),
            self.node_count,
        )


class _NodeIndex:
    """Nearest-node lookup over a fixed point set, bisecting on the first
    coordinate."""

    def __init__(self, points):
        self.order = sorted(range(len(points)), key=lambda i: points[i][0])
        self.keys = [points[i][0] for i in self.order]
        self.points = points

    def near(self, x, tol):
        lo = bisect.bisect_left(self.keys, x[0] - tol)
        hi = bisect.bisect_right(self.keys, x[0] + tol)
        out = []
        for k in range(lo, hi):
            i = self.order[k]
            d = _dist(self.points[i], x)
            if d <= tol:
                out.append((d, i))
        return out


def compress_nodes(points, weights, dom, tol=None, degree=0):
    """Group a symmetric node multiset into orbits.

    Exact duplicates (within ``tol``) are merged first, summing their
    weights.  Nodes related by a group element must carry equal weights up
    to ``tol``; the orbit weight is their mean.  Raises NotSymmetric when
    the multiset is not group invariant, and DegenerateOrbit when a node
    sits on a locus where its orbit degenerates.

    Returns a QuadRule whose expansion reproduces the input within ``tol``.
    """
    if len(points) != len(weights):
        raise ValueError("points and weights differ in length")
    if tol is None:
        tol = mpfr(2) ** (-(current_precision() - 16))
    tol = mpfr(tol)

    pts = [tuple(mpfr(c) for c in p) for p in points]
    wts = [mpfr(w) for w in weights]

    # Merge coincident nodes.
    merged_pts, merged_wts = [], []
    taken = [False] * len(pts)
    index = _NodeIndex(pts)
    for i in range(len(pts)):
        if taken[i]:
            continue
        acc_w = wts[i]
        taken[i] = True
        for d, j in index.near(pts[i], tol):
            if not taken[j]:
                taken[j] = True
                acc_w += wts[j]
        merged_pts.append(pts[i])
        merged_wts.append(acc_w)

    index = _NodeIndex(merged_pts)
    used = [False] * len(merged_pts)
    orbits = []
    classes_by_size = {}
    for c in dom.classes:
        classes_by_size.setdefault(c.size, []).append(c)

    for i in range(len(merged_pts)):
        if used[i]:
            continue
        x = merged_pts[i]
        images = []
        for g in dom.group:
            img = g(x)
            if all(_dist(img, seen) > tol for seen in images):
                images.append(img)
        member_ids = []
        for img in images:
            cands = [(d, j) for d, j in index.near(img, tol) if not used[j]
                     and j not in member_ids]
            if not cands:
                raise NotSymmetric(
                    "missing group image %s of node %s"
                    % (tuple(str(c) for c in img), tuple(str(c) for c in x))
                )
            cands.sort()
            member_ids.append(cands[0][1])
        wvals = [merged_wts[j] for j in member_ids]
        wmean = sum(wvals, mpfr(0)) / len(wvals)
        for w in wvals:
            if abs(w - wmean) > tol * max(mpfr(1), abs(wmean)):
                raise NotSymmetric(
                    "weights differ across one orbit near node %s"
                    % (tuple(str(c) for c in x),)
                )
        orbit = None
        for cls in classes_by_size.get(len(images), []):
            try:
                params = canonical_params(cls, x, tol)
                cand = make_orbit(cls, params, wmean)
            except (NoProjection, DegenerateOrbit):
                continue
            rep_nodes = cand.nodes()
            if len(rep_nodes) == len(images) and all(
                any(_dist(n, img) <= tol for img in images)
                for n in rep_nodes
            ):
                orbit = cand
                break
        if orbit is None:
            raise NotSymmetric(
                "node %s fits no symmetry class (orbit size %d)"
                % (tuple(str(c) for c in x), len(images))
            )
        for j in member_ids:
            used[j] = True
        orbits.append(orbit)

    return QuadRule(dom, degree, orbits)


def _project_segment(x, p0, p1):
    d = [b - a for a, b in zip(p0, p1)]
    dd = sum(c * c for c in d)
    t = sum((xc - a) * c for xc, a, c in zip(x, p0, d)) / dd
    if t < 0:
        t = mpfr(0)
    elif t > 1:
        t = mpfr(1)
    foot = tuple(a + t * c for a, c in zip(p0, d))
    return foot, _dist(x, foot)


def _project_polygon(x, verts):
    # Planar convex polygon in 3D, vertices in convex order.
    v0 = verts[0]
    e1 = [b - a for a, b in zip(v0, verts[1])]
    n1 = vector_norm2(e1)
    e1 = [c / n1 for c in e1]
    e2 = [b - a for a, b in zip(v0, verts[2])]
    proj = sum(a * b for a, b in zip(e2, e1))
    e2 = [c - proj * a for c, a in zip(e2, e1)]
    n2 = vector_norm2(e2)
    e2 = [c / n2 for c in e2]
    rel = [b - a for a, b in zip(v0, x)]
    xi = sum(a * b for a, b in zip(rel, e1))
    eta = sum(a * b for a, b in zip(rel, e2))
    local = []
    for v in verts:
        rv = [b - a for a, b in zip(v0, v)]
        local.append(
            (
                sum(a * b for a, b in zip(rv, e1)),
                sum(a * b for a, b in zip(rv, e2)),
            )
        )
    pos = neg = False
    m = len(verts)
    for k in range(m):
        ax, ay = local[k]
        bx, by = local[(k + 1) % m]
        cross = (bx - ax) * (eta - ay) - (by - ay) * (xi - ax)
        if cross > 0:
            pos = True
        elif cross < 0:
            neg = True
    if not (pos and neg):
        foot = tuple(
            a + xi * b + eta * c for a, b, c in zip(v0, e1, e2)
        )
        return foot, _dist(x, foot)
    best = None
    for k in range(m):
        foot, d = _project_segment(x, verts[k], verts[(k + 1) % m])
        if best is None or d < best[1]:
            best = (foot, d)
    return best


def project_to_symmetry(point, cls):
    """Project a point onto the fixed locus of a symmetry class.

    Returns (params, distance) where params are the normalized parameters
    of the nearest locus point and distance is Euclidean.  Raises
    NoProjection for a class without locus pieces (the generic class).
    """
    if not cls.pieces:
        raise NoProjection(
            "%s %s has no projection target" % (cls.domain.kind, cls.sid)
        )
    point = tuple(mpfr(c) for c in point)
    best = None
    for piece in cls.pieces:
        verts = [tuple(mpfr(f.numerator) / f.denominator
                       if isinstance(f, Fraction) else mpfr(f) for f in v)
                 for v in piece]
        if len(verts) == 1:
            foot, d = verts[0], _dist(point, verts[0])
        elif len(verts) == 2:
            foot, d = _project_segment(point, verts[0], verts[1])
        else:
            foot, d = _project_polygon(point, verts)
        if best is None or d < best[1]:
            best = (foot, d)
    foot, dist = best
    params = canonical_params(cls, foot)
    return params, dist
