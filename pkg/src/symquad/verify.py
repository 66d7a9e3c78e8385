"""Rule quality measurement.

Three independent checks live here: certification (moment residual,
positivity, interiority, and symmetry invariance of the expanded node
set), mesh-refinement convergence on oscillatory integrands with known
closed-form integrals, and the node-count efficiency of a rule against
the best tensor-style reference construction of the same degree.
"""

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from gmpy2 import mpfr

from . import domains as dm
from .basis import objective_basis, residual
from .errors import CertificationFailure, MissingData, PrecisionFloor
from .precision import current_precision, working_precision
from .solver import default_tolerance

_MESHABLE = (dm.SQUARE, dm.CUBE, dm.PRISM, dm.PYRAMID)


class _Element:
    """One mesh cell: an affine image of the reference element."""

    __slots__ = ("mat", "off", "absdet")

    def __init__(self, mat, off, absdet):
        self.mat = tuple(tuple(v for v in row) for row in mat)
        self.off = tuple(off)
        self.absdet = absdet

    def __call__(self, point):
        return tuple(
            b + sum(m * x for m, x in zip(row, point) if m)
            for row, b in zip(self.mat, self.off)
        )


@dataclass(frozen=True)
class Mesh:
    """Affine tiling of the box [-1,1]^dim by one reference element."""

    kind: str
    level: int
    elements: tuple


# Orientation-preserving cube rotations sending the -z axis onto each of
# the six face directions; used to point face pyramids at the cell center.
_FACE_ROTATIONS = (
    ((1, 0, 0), (0, 1, 0), (0, 0, 1)),     # -z face
    ((1, 0, 0), (0, -1, 0), (0, 0, -1)),   # +z face
    ((0, 0, 1), (0, 1, 0), (-1, 0, 0)),    # -x face
    ((0, 0, -1), (0, 1, 0), (1, 0, 0)),    # +x face
    ((1, 0, 0), (0, 0, 1), (0, -1, 0)),    # -y face
    ((1, 0, 0), (0, 0, -1), (0, 1, 0)),    # +y face
)


def mesh(kind, level):
    """Uniform level-``level`` mesh of [-1,1]^dim by elements of ``kind``.

    Each bisection level splits every grid cell in two per axis.  Grid
    cells are squares or cubes; prism meshes cut each cube cell in two
    along a fixed diagonal, and pyramid meshes cut it into six pyramids
    with the apex at the cell center.
    """
    if kind not in _MESHABLE:
        raise ValueError("no box tiling by %r elements" % (kind,))
    level = int(level)
    if level < 0:
        raise ValueError("refinement level must be >= 0")
    m = 1 << level
    h = mpfr(2) / m
    s = h / 2
    lows = [-1 + h * i for i in range(m)]
    els = []
    if kind == dm.SQUARE:
        det = s * s
        for y0 in lows:
            for x0 in lows:
                els.append(_Element(
                    ((s, 0), (0, s)), (x0 + s, y0 + s), det))
    elif kind == dm.CUBE:
        det = s * s * s
        for z0 in lows:
            for y0 in lows:
                for x0 in lows:
                    els.append(_Element(
                        ((s, 0, 0), (0, s, 0), (0, 0, s)),
                        (x0 + s, y0 + s, z0 + s), det))
    elif kind == dm.PRISM:
        # Reference triangle vertices (-1,-1), (1,-1), (-1,1) map to the
        # two triangles of each cell square, split along the diagonal
        # from (x0+h, y0) to (x0, y0+h); both images keep positive
        # orientation.  z extrudes to the cell range.
        det = s * s * s
        for z0 in lows:
            for y0 in lows:
                for x0 in lows:
                    els.append(_Element(
                        ((s, 0, 0), (0, s, 0), (0, 0, s)),
                        (x0 + s, y0 + s, z0 + s), det))
                    els.append(_Element(
                        ((-s, 0, 0), (0, -s, 0), (0, 0, s)),
                        (x0 + s, y0 + s, z0 + s), det))
    else:
        # Pyramid: base on a cell face, apex at the cell center.  The
        # reference apex (0,0,1) maps to the center and the base square
        # (at z=-1) to the face, so the z-column carries scale s/2.
        det = s * s * s / 2
        base = ((s, 0, 0), (0, s, 0), (0, 0, s / 2))
        for z0 in lows:
            for y0 in lows:
                for x0 in lows:
                    c = (x0 + s, y0 + s, z0 + s)
                    for rot in _FACE_ROTATIONS:
                        mat = tuple(
                            tuple(sum(rot[i][k] * base[k][j]
                                      for k in range(3))
                                  for j in range(3))
                            for i in range(3)
                        )
                        # The apex (0,0,1) lands on the cell center, so
                        # the offset is the center minus the z-column.
                        off = tuple(c[i] - mat[i][2] for i in range(3))
                        els.append(_Element(mat, off, det))
    return Mesh(kind, level, tuple(els))


def integrate_on_mesh(rule, grid, f):
    """Sum |det J_e| * w_j * f(map_e(x_j)) over all elements and nodes."""
    if rule.domain.kind != grid.kind:
        raise ValueError(
            "rule on %s cannot integrate a mesh of %s elements"
            % (rule.domain.kind, grid.kind)
        )
    pts, wts = rule.nodes_weights()
    total = mpfr(0)
    for el in grid.elements:
        acc = mpfr(0)
        for x, w in zip(pts, wts):
            acc += w * f(el(x))
        total += el.absdet * acc
    return total


def exact_oscillatory(k):
    """Closed-form integral of cos(k . x) over [-1,1]^dim: prod 2 sin(k_i)/k_i."""
    ks = tuple(int(v) for v in k)
    if len(ks) not in (2, 3) or any(v != w for v, w in zip(ks, k)):
        raise ValueError("k must be 2 or 3 whole numbers")
    if any(v < 1 for v in ks):
        raise ValueError("all wavenumbers must be >= 1")
    out = mpfr(1)
    for v in ks:
        out *= 2 * gmpy2.sin(mpfr(v)) / v
    return out


@dataclass(frozen=True)
class ConvergenceReport:
    """Errors of the oscillatory integral under uniform mesh refinement."""

    kind: str
    degree: int
    k: tuple
    levels: tuple
    errors: tuple
    rates: tuple          # log2(e_l / e_{l+1}) between successive levels
    floored: tuple        # levels whose error sits at the precision floor
    exact: object
    floor: object

    @property
    def asymptotic_rate(self):
        """Rate between the last two levels above the precision floor."""
        live = [e for lvl, e in zip(self.levels, self.errors)
                if lvl not in self.floored]
        if len(live) < 2:
            raise PrecisionFloor(
                "fewer than two refinement levels above the precision "
                "floor; no rate is measurable"
            )
        return gmpy2.log2(live[-2] / live[-1])

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["level", "error", "rate", "floored"])
        for i, (lvl, err) in enumerate(zip(self.levels, self.errors)):
            rate = "" if i == 0 else str(self.rates[i - 1])
            writer.writerow(
                [lvl, str(err), rate, int(lvl in self.floored)]
            )
        return buf.getvalue()


def convergence_study(rule, k, levels):
    """Integrate cos(k . x) on refinements of [-1,1]^dim and report errors.

    ``levels`` is an increasing run of refinement levels (at least two).
    Levels whose error falls below ten units in the last place of the
    working precision are flagged as floored and excluded from rate
    fitting.  Runs at 113 bits minimum so cancellation in the oscillatory
    sums does not mask rule error.
    """
    levels = tuple(int(v) for v in levels)
    if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be an increasing run of length >= 2")
    with working_precision(max(113, current_precision())):
        ks = tuple(mpfr(int(v)) for v in k)
        if len(ks) != rule.domain.dim:
            raise ValueError(
                "need %d wavenumbers for the %s"
                % (rule.domain.dim, rule.domain.kind)
            )
        exact = exact_oscillatory(k)
        floor = 10 * gmpy2.exp2(-current_precision())

        def f(x):
            return gmpy2.cos(sum(kv * xv for kv, xv in zip(ks, x)))

        errors = []
        floored = []
        for lvl in levels:
            approx = integrate_on_mesh(rule, mesh(rule.domain.kind, lvl), f)
            err = abs(approx - exact)
            errors.append(err)
            if err < floor:
                floored.append(lvl)
        rates = tuple(
            gmpy2.log2(errors[i] / errors[i + 1])
            for i in range(len(errors) - 1)
        )
        return ConvergenceReport(
            kind=rule.domain.kind, degree=rule.degree, k=tuple(map(int, k)),
            levels=levels, errors=tuple(errors), rates=rates,
            floored=tuple(floored), exact=exact, floor=floor,
        )


@dataclass(frozen=True)
class EfficiencyReport:
    """Node saving against the reference tensor-style construction."""

    kind: str
    q: int
    n: int
    n_r: int

    @property
    def efficiency(self):
        return Fraction(self.n_r - self.n, self.n_r)


def reference_count(kind, q, aux_counts=None):
    """Node count of the reference construction for a degree-q rule.

    Tensor products for square, cube, and prism (line rule times the
    best triangle rule) and the layered square construction for the
    pyramid.  ``aux_counts(kind, q)`` supplies the best known triangle
    and square counts where needed.  No even-degree square rule exists,
    so at even pyramid degrees the layers carry the next odd degree's
    square rule, exactly as the layered construction itself does.
    """
    q = int(q)
    line = -(-(q + 1) // 2)
    if kind == dm.SQUARE:
        return line ** 2
    if kind == dm.CUBE:
        return line ** 3
    if kind == dm.PRISM:
        n_t = None if aux_counts is None else aux_counts(dm.TRIANGLE, q)
        if n_t is None:
            raise MissingData(
                "prism efficiency at degree %d needs the best triangle "
                "node count" % q
            )
        return line * int(n_t)
    if kind == dm.PYRAMID:
        sq_degree = q if q % 2 else q + 1
        n_s = None if aux_counts is None else aux_counts(dm.SQUARE,
                                                         sq_degree)
        if n_s is None:
            raise MissingData(
                "pyramid efficiency at degree %d needs the best square "
                "node count at degree %d" % (q, sq_degree)
            )
        return (-(-(q + 3) // 2)) * int(n_s)
    raise ValueError("no reference construction for %r" % (kind,))


def efficiency(kind, q, n, aux_counts=None):
    """Efficiency e = (n_r - n)/n_r of an n-node degree-q rule."""
    n_r = reference_count(kind, q, aux_counts)
    return EfficiencyReport(kind=kind, q=int(q), n=int(n), n_r=n_r)


@dataclass(frozen=True)
class Certificate:
    """Outcome of assessing one rule against every certification bound.

    ``failure`` is None when all checks pass, else a description of the
    first violated bound.
    """

    kind: str
    degree: int
    check_degree: int
    node_count: int
    residual: object
    tolerance: object
    residual_ok: bool
    min_weight: object
    positive: bool
    interior: bool
    symmetric: bool
    symmetry_defect: object
    symmetry_tolerance: object
    failure: object

    @property
    def passed(self):
        return self.failure is None


def assess(rule, tolerance=None, check_degree=None):
    """Check residual, positivity, interiority, and symmetry invariance.

    The moment residual is evaluated at ``check_degree`` (default: the
    rule's stated degree) against ``tolerance``.  The expanded node set
    must be carried onto itself (same points, same weights) by every
    element of the domain's symmetry group to within 2^-(precision-16).
    All checks always run; the returned Certificate records each outcome
    and, when something failed, describes the first violation.
    """
    kind = rule.domain.kind
    q = rule.degree if check_degree is None else int(check_degree)
    tol = mpfr(tolerance) if tolerance is not None else default_tolerance()
    failures = []

    res = residual(rule, objective_basis(kind, q)).value
    residual_ok = bool(res < tol)
    if not residual_ok:
        failures.append(
            "%s degree-%d rule: moment residual %s at degree %d exceeds %s"
            % (kind, rule.degree, res, q, tol)
        )

    min_w = min(o.weight for o in rule.orbits)
    positive = bool(min_w > 0)
    if not positive:
        failures.append(
            "%s degree-%d rule: non-positive weight %s"
            % (kind, rule.degree, min_w)
        )

    pts, wts = rule.nodes_weights()
    interior = True
    for x in pts:
        if not rule.domain.contains(x):
            interior = False
            failures.append(
                "%s degree-%d rule: node %s is not interior"
                % (kind, rule.degree, tuple(map(float, x)))
            )
            break

    sym_tol = gmpy2.exp2(-(current_precision() - 16))
    index = dm._NodeIndex(pts)
    defect = mpfr(0)
    scale = max(abs(w) for w in wts)
    symmetric = True
    for g in rule.domain.group:
        if not symmetric:
            break
        for x, w in zip(pts, wts):
            img = g(x)
            ok = False
            for d, j in index.near(img, sym_tol):
                if abs(wts[j] - w) <= sym_tol * scale:
                    ok = True
                    defect = max(defect, d, abs(wts[j] - w) / scale)
                    break
            if not ok:
                symmetric = False
                failures.append(
                    "%s degree-%d rule: node image %s under a symmetry "
                    "map has no matching node/weight"
                    % (kind, rule.degree, tuple(map(float, img)))
                )
                break

    return Certificate(
        kind=kind, degree=rule.degree, check_degree=q,
        node_count=rule.node_count, residual=res, tolerance=tol,
        residual_ok=residual_ok, min_weight=min_w, positive=positive,
        interior=interior, symmetric=symmetric, symmetry_defect=defect,
        symmetry_tolerance=sym_tol,
        failure=failures[0] if failures else None,
    )


def certify(rule, tolerance=None, check_degree=None):
    """Assess a rule and raise CertificationFailure on the first violated
    bound; returns the passing Certificate otherwise."""
    cert = assess(rule, tolerance=tolerance, check_degree=check_degree)
    if not cert.passed:
        raise CertificationFailure(cert.failure)
    return cert
