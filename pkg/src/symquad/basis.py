"""Orthonormal polynomial bases and their symmetry-invariant combinations.

Each domain carries an orthonormal basis of total degree <= q built from
Legendre and Jacobi polynomials (collapsed coordinates on the simplex-like
domains).  The moment conditions of a fully symmetric rule only see the
group-invariant part of that space, so the solver works on an objective
basis: orthonormal invariant combinations of the raw basis functions.  On
the square, cube, and pyramid the invariant combinations are closed form;
on the triangle, prism, and tetrahedron they come from numeric group
averaging followed by a rank-revealing Gram-Schmidt pass.
"""

import itertools
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpfr

from . import domains as dm
from .precision import current_precision, gauss_legendre, vector_norm2


def legendre_table(x, n):
    """Normalized Legendre values and derivatives L_0..L_n at x.

    L_k has unit norm against the flat weight on (-1, 1).
    """
    vals = [mpfr(1)] * (n + 1)
    ders = [mpfr(0)] * (n + 1)
    if n >= 1:
        vals[1] = mpfr(x)
        ders[1] = mpfr(1)
    for k in range(2, n + 1):
        vals[k] = ((2 * k - 1) * x * vals[k - 1] - (k - 1) * vals[k - 2]) / k
        ders[k] = ((2 * k - 1) * (vals[k - 1] + x * ders[k - 1])
                   - (k - 1) * ders[k - 2]) / k
    for k in range(n + 1):
        c = gmpy2.sqrt(mpfr(2 * k + 1) / 2)
        vals[k] *= c
        ders[k] *= c
    return vals, ders


def jacobi_table(alpha, x, n):
    """Normalized Jacobi (alpha, 0) values and derivatives J_0..J_n at x.

    J_k has unit norm against the weight ((1-x)/2)^alpha on (-1, 1).
    """
    vals = [mpfr(1)] * (n + 1)
    ders = [mpfr(0)] * (n + 1)
    if n >= 1:
        vals[1] = ((alpha + 2) * mpfr(x) + alpha) / 2
        ders[1] = mpfr(alpha + 2) / 2
    for k in range(2, n + 1):
        a = 2 * k * (k + alpha) * (2 * k + alpha - 2)
        b1 = 2 * k + alpha - 1
        b2 = (2 * k + alpha) * (2 * k + alpha - 2)
        b3 = alpha * alpha
        c = 2 * (k + alpha - 1) * (k - 1) * (2 * k + alpha)
        vals[k] = (b1 * ((b2 * x + b3) * vals[k - 1]) - c * vals[k - 2]) / a
        ders[k] = (b1 * (b2 * vals[k - 1] + (b2 * x + b3) * ders[k - 1])
                   - c * ders[k - 2]) / a
    for k in range(n + 1):
        c = gmpy2.sqrt(mpfr(2 * k + alpha + 1) / 2)
        vals[k] *= c
        ders[k] *= c
    return vals, ders


def _graded_indices(dim, q):
    out = []
    if dim == 2:
        for d in range(q + 1):
            for i in range(d, -1, -1):
                out.append((i, d - i))
    else:
        for d in range(q + 1):
            for i in range(d, -1, -1):
                for j in range(d - i, -1, -1):
                    out.append((i, j, d - i - j))
    return out


class OrthoBasis:
    """Orthonormal basis of polynomials of total degree <= q on a domain.

    indices[i] gives the per-direction degrees of function i; functions are
    ordered by total degree, then reverse-lexicographically, so index 0 is
    the constant 1/sqrt(volume).
    """

    def __init__(self, dom, degree):
        self.domain = dom
        self.degree = int(degree)
        self.indices = tuple(_graded_indices(dom.dim, degree))
        self.size = len(self.indices)
        self.block_slices = self._blocks()
        self._pos = {ix: n for n, ix in enumerate(self.indices)}

    def _blocks(self):
        slices = []
        start = 0
        for d in range(self.degree + 1):
            count = sum(1 for ix in self.indices if sum(ix) == d)
            slices.append((start, start + count))
            start += count
        return tuple(slices)

    def index_of(self, ix):
        return self._pos[ix]

    def values(self, point):
        vals, _ = self._evaluate(point, False)
        return vals

    def values_grads(self, point):
        return self._evaluate(point, True)

    def _evaluate(self, point, want_grads):
        kind = self.domain.kind
        if kind in (dm.SQUARE, dm.CUBE):
            return self._eval_tensor(point, want_grads)
        if kind == dm.TRIANGLE:
            return self._eval_triangle(point, want_grads)
        if kind == dm.PRISM:
            return self._eval_prism(point, want_grads)
        if kind == dm.PYRAMID:
            return self._eval_pyramid(point, want_grads)
        if kind == dm.TETRAHEDRON:
            return self._eval_tetrahedron(point, want_grads)
        raise AssertionError(kind)

    def _eval_tensor(self, point, want_grads):
        q = self.degree
        tabs = [legendre_table(c, q) for c in point]
        vals, grads = [], []
        for ix in self.indices:
            v = tabs[0][0][ix[0]]
            for d in range(1, len(ix)):
                v *= tabs[d][0][ix[d]]
            vals.append(v)
            if want_grads:
                g = []
                for d in range(len(ix)):
                    gv = tabs[d][1][ix[d]]
                    for e in range(len(ix)):
                        if e != d:
                            gv *= tabs[e][0][ix[e]]
                    g.append(gv)
                grads.append(tuple(g))
        return vals, grads if want_grads else None

    def _eval_triangle(self, point, want_grads):
        q = self.degree
        x, y = mpfr(point[0]), mpfr(point[1])
        beta = (1 - y) / 2
        xi = (1 + x) / beta - 1
        pv, pd = legendre_table(xi, q)
        jt = [jacobi_table(2 * i + 1, y, q - i) for i in range(q + 1)]
        bpow = [mpfr(1)]
        for _ in range(q):
            bpow.append(bpow[-1] * beta)
        vals, grads = [], []
        for i, j in self.indices:
            jv, jd = jt[i]
            vals.append(pv[i] * bpow[i] * jv[j])
            if not want_grads:
                continue
            if i > 0:
                core = bpow[i - 1] * jv[j]
                gx = pd[i] * core
                t1 = (pd[i] * (xi + 1) - i * pv[i]) / 2 * core
            else:
                gx = mpfr(0)
                t1 = mpfr(0)
            gy = t1 + pv[i] * bpow[i] * jd[j]
            grads.append((gx, gy))
        return vals, grads if want_grads else None

    def _eval_prism(self, point, want_grads):
        q = self.degree
        x, y, z = point
        tri = ortho_basis(dm.TRIANGLE, q)
        lz, lzd = legendre_table(z, q)
        if want_grads:
            tvals, tgrads = tri.values_grads((x, y))
        else:
            tvals = tri.values((x, y))
        vals, grads = [], []
        for i, j, k in self.indices:
            n2 = tri.index_of((i, j))
            vals.append(tvals[n2] * lz[k])
            if want_grads:
                gx, gy = tgrads[n2]
                grads.append((gx * lz[k], gy * lz[k], tvals[n2] * lzd[k]))
        return vals, grads if want_grads else None

    def _eval_pyramid(self, point, want_grads):
        q = self.degree
        x, y, z = mpfr(point[0]), mpfr(point[1]), mpfr(point[2])
        a = (1 - z) / 2
        xi, eta = x / a, y / a
        pxv, pxd = legendre_table(xi, q)
        pyv, pyd = legendre_table(eta, q)
        jt = [jacobi_table(2 * m + 2, z, q - m) for m in range(q + 1)]
        apow = [mpfr(1)]
        for _ in range(q):
            apow.append(apow[-1] * a)
        vals, grads = [], []
        for i, j, k in self.indices:
            m = i + j
            jv, jd = jt[m]
            vals.append(pxv[i] * pyv[j] * apow[m] * jv[k])
            if not want_grads:
                continue
            if m > 0:
                base = apow[m - 1] * jv[k]
                gx = pxd[i] * pyv[j] * base
                gy = pxv[i] * pyd[j] * base
                t1 = (pxd[i] * xi * pyv[j] + pxv[i] * pyd[j] * eta
                      - m * pxv[i] * pyv[j]) / 2 * base
            else:
                gx = mpfr(0)
                gy = mpfr(0)
                t1 = mpfr(0)
            gz = t1 + pxv[i] * pyv[j] * apow[m] * jd[k]
            grads.append((gx, gy, gz))
        return vals, grads if want_grads else None

    def _eval_tetrahedron(self, point, want_grads):
        q = self.degree
        x, y, z = mpfr(point[0]), mpfr(point[1]), mpfr(point[2])
        b1 = (-y - z) / 2
        b2 = (1 - z) / 2
        xi = (1 + x) / b1 - 1
        st = (1 + y) / b2 - 1
        pv, pd = legendre_table(xi, q)
        jt1 = [jacobi_table(2 * i + 1, st, q - i) for i in range(q + 1)]
        jt2 = [jacobi_table(2 * m + 2, z, q - m) for m in range(q + 1)]
        b1pow = [mpfr(1)]
        b2pow = [mpfr(1)]
        for _ in range(q):
            b1pow.append(b1pow[-1] * b1)
            b2pow.append(b2pow[-1] * b2)
        vals, grads = [], []
        for i, j, k in self.indices:
            bv, bd = jt1[i]
            cv, cd = jt2[i + j]
            vals.append(pv[i] * b1pow[i] * bv[j] * b2pow[j] * cv[k])
            if not want_grads:
                continue
            if i > 0:
                core = b1pow[i - 1] * bv[j] * b2pow[j] * cv[k]
                gx = pd[i] * core
                t1 = (pd[i] * (xi + 1) - i * pv[i]) / 2 * core
            else:
                gx = mpfr(0)
                t1 = mpfr(0)
            if j > 0:
                t2y = pv[i] * b1pow[i] * bd[j] * b2pow[j - 1] * cv[k]
                t2z = pv[i] * b1pow[i] * (bd[j] * (st + 1) - j * bv[j]) / 2 \
                    * b2pow[j - 1] * cv[k]
            else:
                t2y = mpfr(0)
                t2z = mpfr(0)
            gy = t1 + t2y
            gz = t1 + t2z + pv[i] * b1pow[i] * bv[j] * b2pow[j] * cd[k]
            grads.append((gx, gy, gz))
        return vals, grads if want_grads else None


_ORTHO_CACHE = {}


def ortho_basis(kind, q):
    """Cached orthonormal basis for a domain kind.

    The object holds no precision-dependent state; values are computed at
    the caller's ambient precision.
    """
    key = (kind, int(q))
    b = _ORTHO_CACHE.get(key)
    if b is None:
        b = OrthoBasis(dm.domain(kind), q)
        _ORTHO_CACHE[key] = b
    return b


@dataclass(frozen=True)
class MomentResidual:
    """Euclidean norm of the moment defect together with problem sizes."""

    value: object
    basis_size: int
    node_count: int


class ObjectiveBasis:
    """Orthonormal group-invariant combinations of an orthonormal basis.

    rows[c] is a tuple of (raw_index, coefficient) pairs defining invariant
    function c.  The first row is always the constant, so the moment vector
    is (sqrt(volume), 0, ..., 0).
    """

    def __init__(self, ortho, rows):
        self.ortho = ortho
        self.domain = ortho.domain
        self.degree = ortho.degree
        self.rows = rows
        self.size = len(rows)

    def moments(self):
        f = [mpfr(0)] * self.size
        f[0] = gmpy2.sqrt(self.domain.volume())
        return f

    def values(self, point):
        raw = self.ortho.values(point)
        return [sum((c * raw[ix] for ix, c in row), mpfr(0))
                for row in self.rows]

    def values_grads(self, point):
        raw, raw_g = self.ortho.values_grads(point)
        vals, grads = [], []
        dim = self.domain.dim
        for row in self.rows:
            v = mpfr(0)
            g = [mpfr(0)] * dim
            for ix, c in row:
                v += c * raw[ix]
                rg = raw_g[ix]
                for d in range(dim):
                    g[d] += c * rg[d]
            vals.append(v)
            grads.append(tuple(g))
        return vals, grads


def _rows_square(ortho):
    inv_sqrt2 = 1 / gmpy2.sqrt(mpfr(2))
    rows = []
    for d in range(0, ortho.degree + 1, 2):
        for i in range(d, d // 2 - 1, -2):
            j = d - i
            if i == j:
                rows.append(((ortho.index_of((i, j)), mpfr(1)),))
            else:
                rows.append(((ortho.index_of((i, j)), inv_sqrt2),
                             (ortho.index_of((j, i)), inv_sqrt2)))
    return rows


def _rows_cube(ortho):
    rows = []
    seen = set()
    for ix in ortho.indices:
        if any(v % 2 for v in ix):
            continue
        key = tuple(sorted(ix, reverse=True))
        if key in seen:
            continue
        seen.add(key)
        perms = sorted(set(itertools.permutations(key)))
        c = 1 / gmpy2.sqrt(mpfr(len(perms)))
        rows.append(tuple((ortho.index_of(p), c) for p in perms))
    return rows


def _rows_pyramid(ortho):
    inv_sqrt2 = 1 / gmpy2.sqrt(mpfr(2))
    rows = []
    for ix in ortho.indices:
        i, j, k = ix
        if i % 2 or j % 2 or i < j:
            continue
        if i == j:
            rows.append(((ortho.index_of(ix), mpfr(1)),))
        else:
            rows.append(((ortho.index_of((i, j, k)), inv_sqrt2),
                         (ortho.index_of((j, i, k)), inv_sqrt2)))
    return rows


def tensor_reference(kind, degree):
    """Reference integration nodes and weights, exact for polynomials of
    total degree <= degree, built from tensor Gauss-Legendre rules through
    the collapsed maps.  Independent of any symmetric-rule machinery."""
    degree = int(degree)
    p = current_precision()

    def gl(d):
        return gauss_legendre((d + 2) // 2, p)

    if kind in (dm.SQUARE, dm.CUBE):
        dim = 2 if kind == dm.SQUARE else 3
        line = gl(degree)
        pts, wts = [], []
        for combo in itertools.product(range(len(line)), repeat=dim):
            pts.append(tuple(line.nodes[c] for c in combo))
            w = mpfr(1)
            for c in combo:
                w *= line.weights[c]
            wts.append(w)
        return pts, wts
    if kind == dm.TRIANGLE:
        gu, gv = gl(degree), gl(degree + 1)
        pts, wts = [], []
        for xv, wv in zip(gv.nodes, gv.weights):
            for xu, wu in zip(gu.nodes, gu.weights):
                r = -1 + (1 + xu) * (1 - xv) / 2
                pts.append((r, xv))
                wts.append(wu * wv * (1 - xv) / 2)
        return pts, wts
    if kind == dm.PRISM:
        tp, tw = tensor_reference(dm.TRIANGLE, degree)
        gz = gl(degree)
        pts, wts = [], []
        for (x, y), w2 in zip(tp, tw):
            for xz, wz in zip(gz.nodes, gz.weights):
                pts.append((x, y, xz))
                wts.append(w2 * wz)
        return pts, wts
    if kind == dm.PYRAMID:
        gxy, gz = gl(degree), gl(degree + 2)
        pts, wts = [], []
        for xz, wz in zip(gz.nodes, gz.weights):
            a = (1 - xz) / 2
            for xx, wx in zip(gxy.nodes, gxy.weights):
                for xy, wy in zip(gxy.nodes, gxy.weights):
                    pts.append((xx * a, xy * a, xz))
                    wts.append(wx * wy * wz * a * a)
        return pts, wts
    if kind == dm.TETRAHEDRON:
        gu, gv, gw = gl(degree), gl(degree + 1), gl(degree + 2)
        pts, wts = [], []
        for xw, ww in zip(gw.nodes, gw.weights):
            for xv, wv in zip(gv.nodes, gv.weights):
                y = -1 + (1 + xv) * (1 - xw) / 2
                span = (-y - xw) / 2
                for xu, wu in zip(gu.nodes, gu.weights):
                    x = -1 + (1 + xu) * span
                    pts.append((x, y, xw))
                    wts.append(wu * wv * ww * span * (1 - xw) / 2)
        return pts, wts
    raise AssertionError(kind)


def _rows_averaged(ortho):
    """Invariant rows by numeric group averaging and a rank-revealing
    Gram-Schmidt pass, block by total degree.

    The averaging operator is block diagonal over total degree because the
    group maps are measure preserving, so each block is handled alone.
    """
    dom = ortho.domain
    q = ortho.degree
    pts, wts = tensor_reference(dom.kind, 2 * q)
    vals = [ortho.values(x) for x in pts]
    m = ortho.size
    navg = [[mpfr(0)] * m for _ in range(m)]
    for g in dom.group:
        gvals = [ortho.values(g(x)) for x in pts]
        for lo, hi in ortho.block_slices:
            for a in range(lo, hi):
                row = navg[a]
                for b in range(lo, hi):
                    acc = mpfr(0)
                    for n in range(len(pts)):
                        acc += wts[n] * gvals[n][a] * vals[n][b]
                    row[b] += acc
    ng = len(dom.group)
    for a in range(m):
        for b in range(m):
            navg[a][b] /= ng

    drop = mpfr(2) ** (-(current_precision() // 2))
    rows = []
    for lo, hi in ortho.block_slices:
        nb = hi - lo
        if nb == 0:
            continue
        mb = [row[lo:hi] for row in navg[lo:hi]]
        gram = [[sum((mb[a][t] * mb[b][t] for t in range(nb)), mpfr(0))
                 for b in range(nb)] for a in range(nb)]
        coeffs = []
        resid = [gram[a][a] for a in range(nb)]
        for _step in range(nb):
            piv = max(range(nb), key=lambda a: resid[a])
            if not resid[piv] > drop * drop:
                break
            vec = [mpfr(0)] * nb
            vec[piv] = mpfr(1)
            for cvec in coeffs:
                alpha = sum((cvec[a] * gram[a][piv] for a in range(nb)),
                            mpfr(0))
                for a in range(nb):
                    vec[a] -= alpha * cvec[a]
            nrm2 = mpfr(0)
            for a in range(nb):
                for b in range(nb):
                    nrm2 += vec[a] * gram[a][b] * vec[b]
            if not nrm2 > drop * drop:
                resid[piv] = mpfr(0)
                continue
            nrm = gmpy2.sqrt(nrm2)
            vec = [c / nrm for c in vec]
            coeffs.append(vec)
            for a in range(nb):
                proj = mpfr(0)
                for t in range(nb):
                    proj += vec[t] * gram[t][a]
                resid[a] -= proj * proj
                if resid[a] < 0:
                    resid[a] = mpfr(0)
        for cvec in coeffs:
            raw = [mpfr(0)] * nb
            for a in range(nb):
                if cvec[a] == 0:
                    continue
                for t in range(nb):
                    raw[t] += cvec[a] * mb[a][t]
            row = tuple((lo + t, raw[t]) for t in range(nb)
                        if abs(raw[t]) > drop)
            if row:
                rows.append(row)
    return rows


def _rows_prism(ortho):
    tri = ortho_basis(dm.TRIANGLE, ortho.degree)
    tri_rows = objective_basis(dm.TRIANGLE, ortho.degree).rows
    rows = []
    for trow in tri_rows:
        d = sum(tri.indices[trow[0][0]])
        for k in range(0, ortho.degree - d + 1, 2):
            rows.append(tuple((ortho.index_of(tri.indices[ix] + (k,)), c)
                              for ix, c in trow))
    rows.sort(key=lambda row: (sum(ortho.indices[row[0][0]]),
                               [ortho.indices[e[0]] for e in row]))
    return rows


_OBJ_CACHE = {}


def objective_basis(kind, q):
    """Cached invariant objective basis for a domain kind at ambient
    precision."""
    key = (kind, int(q), current_precision())
    b = _OBJ_CACHE.get(key)
    if b is not None:
        return b
    ortho = ortho_basis(kind, q)
    if kind == dm.SQUARE:
        rows = _rows_square(ortho)
    elif kind == dm.CUBE:
        rows = _rows_cube(ortho)
    elif kind == dm.PYRAMID:
        rows = _rows_pyramid(ortho)
    elif kind == dm.PRISM:
        rows = _rows_prism(ortho)
    else:
        rows = _rows_averaged(ortho)
    b = ObjectiveBasis(ortho, tuple(tuple(r) for r in rows))
    _OBJ_CACHE[key] = b
    return b


def reduced_vandermonde(rule, objective):
    """Rows of invariant-function values at each orbit representative."""
    return [objective.values(o.rep_point()) for o in rule.orbits]


def vandermonde(rule, basis):
    """Full node-by-function matrix of basis values over the expanded rule."""
    pts, _ = rule.nodes_weights()
    return [basis.values(x) for x in pts]


def residual_vector(rule, objective):
    """Moment defect f - V^T w over the invariant basis."""
    r = objective.moments()
    for o in rule.orbits:
        vals = objective.values(o.sclass.rep_point(o.params))
        c = o.size * o.weight
        for i in range(objective.size):
            r[i] -= c * vals[i]
    return r


def residual(rule, objective=None):
    """Norm of the moment defect of a rule at its stated degree."""
    if objective is None:
        objective = objective_basis(rule.domain.kind, rule.degree)
    r = residual_vector(rule, objective)
    return MomentResidual(
        vector_norm2(r), objective.size, rule.node_count
    )


def residual_full(rule, ortho=None):
    """Moment defect norm over the full (non-invariant) basis; used to
    cross-check that invariant reduction loses nothing."""
    if ortho is None:
        ortho = ortho_basis(rule.domain.kind, rule.degree)
    f = [mpfr(0)] * ortho.size
    f[0] = gmpy2.sqrt(ortho.domain.volume())
    pts, wts = rule.nodes_weights()
    for x, w in zip(pts, wts):
        vals = ortho.values(x)
        for i in range(ortho.size):
            f[i] -= w * vals[i]
    return vector_norm2(f)
