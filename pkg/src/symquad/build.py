"""Initial rule construction and node elimination.

Initial rules come from tensor products of Gauss-Legendre rules (square,
cube), a triangle rule tensored with a line rule (prism), and either an
algebraic layering of a square rule or a geometric assembly of triangle
and tetrahedron rules (pyramid).  Reduction then alternates two moves:
orbit elimination (drop an orbit and re-solve) and orbit collapse (replace
an orbit by the nearest orbit of a lower-parameter symmetry class and
re-solve), scheduled over per-domain symmetry bundles with priority
numbers that decide the order of elimination attempts.
"""

import random
import zlib
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpfr

from . import domains as dm
from . import solver as sv
from .basis import objective_basis, residual
from .errors import DegenerateOrbit, NoProjection, SolveFailed
from .precision import current_precision, gauss_legendre


@dataclass(frozen=True)
class ReductionPlan:
    """Reduction schedule: symmetry bundles in the order they are
    processed, matching per-symmetry priority numbers, and the collapse
    distance threshold."""

    bundles: tuple
    priorities: tuple
    collapse_threshold: object

    def priority_map(self):
        out = {}
        for sids, prios in zip(self.bundles, self.priorities):
            for sid, p in zip(sids, prios):
                out[sid] = p
        return out


_BUNDLE_TABLE = {
    dm.SQUARE: ((("S4",), ("S3", "S2"), ("S1",)),
                ((1,), (10 ** 5, 1), (1,))),
    dm.CUBE: ((("S7",), ("S6", "S5"), ("S4", "S3", "S2"), ("S1",)),
              ((1,), (10 ** 5, 1), (1, 10 ** 5, 10 ** 10), (1,))),
    dm.PRISM: ((("S6",), ("S5", "S4"), ("S3", "S2"), ("S1",)),
               ((1,), (1, 10 ** 5), (1, 10 ** 5), (1,))),
    dm.PYRAMID: ((("S4",), ("S3", "S2"), ("S1",)),
                 ((1,), (10 ** 5, 1), (1,))),
    dm.TRIANGLE: ((("S3",), ("S2",), ("S1",)),
                  ((1,), (1,), (1,))),
    dm.TETRAHEDRON: ((("S5",), ("S4",), ("S3", "S2"), ("S1",)),
                     ((1,), (1,), (1, 10 ** 5), (1,))),
}


def default_collapse_threshold(kind, q):
    """Collapse distance gate: generous where nodes are sparse, tighter at
    high degree where distinct orbits sit close together."""
    dense = q >= 31 if kind in (dm.SQUARE, dm.TRIANGLE) else q >= 20
    return "0.1" if dense else "0.25"


def default_plan(kind, q):
    bundles, priorities = _BUNDLE_TABLE[kind]
    return ReductionPlan(bundles, priorities,
                         default_collapse_threshold(kind, q))


class EliminationTrace:
    """Deterministic log of every elimination and collapse attempt."""

    def __init__(self):
        self.entries = []

    def log(self, action, sid, index, target, outcome, residual_value,
            iterations, nodes):
        self.entries.append((
            action, sid, int(index), target, outcome,
            str(residual_value), int(iterations), int(nodes),
        ))

    def to_text(self):
        lines = ["# action symmetry index target outcome residual "
                 "iterations nodes"]
        for action, sid, index, target, outcome, res, its, nodes in \
                self.entries:
            lines.append("%s %s %d %s %s %s %d %d" % (
                action, sid, index, target or "-", outcome, res, its, nodes
            ))
        return "\n".join(lines) + "\n"


def _minimal_odd_line(q):
    """Gauss-Legendre rule of degree >= q with the smallest odd node
    count; odd counts place a node at the origin."""
    n = (q + 2) // 2
    if n % 2 == 0:
        n += 1
    return gauss_legendre(n, current_precision())


def init_square(q):
    """Tensor square of the minimal-odd Gauss-Legendre rule; exact at
    degree q with no solve and populated center and axis classes."""
    q = _require_odd(dm.SQUARE, q)
    line = _minimal_odd_line(q)
    pts, wts = [], []
    for xa, wa in zip(line.nodes, line.weights):
        for xb, wb in zip(line.nodes, line.weights):
            pts.append((xa, xb))
            wts.append(wa * wb)
    return dm.compress_nodes(pts, wts, dm.domain(dm.SQUARE), degree=q)


def init_cube(q):
    """Tensor cube of the minimal-odd Gauss-Legendre rule."""
    q = _require_odd(dm.CUBE, q)
    line = _minimal_odd_line(q)
    pts, wts = [], []
    for xa, wa in zip(line.nodes, line.weights):
        for xb, wb in zip(line.nodes, line.weights):
            for xc, wc in zip(line.nodes, line.weights):
                pts.append((xa, xb, xc))
                wts.append(wa * wb * wc)
    return dm.compress_nodes(pts, wts, dm.domain(dm.CUBE), degree=q)


def _require_odd(kind, q):
    q = int(q)
    if q < 1:
        raise ValueError("degree must be at least 1, got %d" % q)
    if q % 2 == 0:
        raise ValueError(
            "no fully symmetric rule of even degree exists on the %s; "
            "use degree %d" % (kind, q + 1)
        )
    return q


def with_center(rule, degree=None, config=None):
    """Ensure the rule has an orbit on its zero-parameter center class.

    When absent, a center orbit carrying an equal per-node weight share is
    appended (existing weights are scaled down to keep the total weight at
    the volume) and the rule is re-solved at the given degree; raises
    SolveFailed when that solve does not converge.  The equal share keeps
    every orbit weight of the same magnitude, which matters later: node
    elimination retunes weights in log form, where recovering a
    nearly-zero weight is slow.
    """
    dom = rule.domain
    degree = rule.degree if degree is None else int(degree)
    center = next((c for c in dom.classes if c.nparams == 0), None)
    if center is None:
        raise ValueError("%s has no zero-parameter class" % dom.kind)
    if any(o.sid == center.sid for o in rule.orbits):
        if degree == rule.degree:
            return rule
        return dm.QuadRule(dom, degree, rule.orbits)
    n = rule.node_count
    w0 = dom.volume() / (n + 1)
    shrink = mpfr(n) / (n + 1)
    trial = dm.QuadRule(
        dom, degree,
        tuple(dm.Orbit(o.sclass, o.params, o.weight * shrink)
              for o in rule.orbits)
        + (dm.make_orbit(center, (), w0),),
    )
    if config is None:
        config = sv.SolverConfig()
    out = _solve_attempt(trial, objective_basis(dom.kind, degree), config)
    if not out.converged:
        raise SolveFailed(
            "adding a center node to the %s rule did not re-converge "
            "(status %s)" % (dom.kind, out.status)
        )
    return out.rule


def init_prism(q, tri, config=None):
    """Triangle rule (centroid ensured) tensored with the minimal-odd
    Gauss-Legendre line rule; exact at degree q with no solve."""
    q = int(q)
    if tri.domain.kind != dm.TRIANGLE:
        raise ValueError("prism initialization needs a triangle rule")
    if tri.degree < q:
        raise ValueError(
            "triangle rule of degree %d cannot seed a degree-%d prism "
            "rule" % (tri.degree, q)
        )
    tri = with_center(tri, degree=q, config=config)
    line = _minimal_odd_line(q)
    tpts, twts = tri.nodes_weights()
    pts, wts = [], []
    for (x, y), wt in zip(tpts, twts):
        for z, wl in zip(line.nodes, line.weights):
            pts.append((x, y, z))
            wts.append(wt * wl)
    return dm.compress_nodes(pts, wts, dm.domain(dm.PRISM), degree=q)


def init_pyramid_algebraic(q, square_rule, config=None):
    """Scale a square rule into Gauss-Legendre z-layers of the pyramid.

    Layer z has lateral scale a = (1-z)/2 and weight factor a^2; the
    z-rule has degree q+2, which makes the construction exact at degree q
    with no solve.
    """
    q = int(q)
    if square_rule.domain.kind != dm.SQUARE:
        raise ValueError("algebraic pyramid initialization needs a square "
                         "rule")
    if square_rule.degree < q:
        raise ValueError(
            "square rule of degree %d cannot seed a degree-%d pyramid "
            "rule" % (square_rule.degree, q)
        )
    sq = with_center(square_rule, degree=max(q, 1), config=config)
    line = gauss_legendre((q + 4) // 2, current_precision())
    spts, swts = sq.nodes_weights()
    pts, wts = [], []
    for z, wl in zip(line.nodes, line.weights):
        a = (1 - z) / 2
        aa = a * a
        for (x, y), ws in zip(spts, swts):
            pts.append((a * x, a * y, z))
            wts.append(aa * ws * wl)
    return dm.compress_nodes(pts, wts, dm.domain(dm.PYRAMID), degree=q)


def _dedupe(points, tol):
    index = dm._NodeIndex(points)
    out = []
    taken = [False] * len(points)
    for i in range(len(points)):
        if taken[i]:
            continue
        taken[i] = True
        for _d, j in index.near(points[i], tol):
            taken[j] = True
        out.append(points[i])
    return out


def init_pyramid_geometric(q, tri, tet, config=None):
    """Assemble pyramid nodes from triangle and tetrahedron rules.

    Triangle nodes land on the diagonal slice x = 0; tetrahedron nodes
    fill the quarter wedge -x < y of the pyramid.  Both sets are cut down
    to the sector 0 <= x <= y, expanded by the symmetry group, given equal
    weights summing to the volume, and handed to the solver, since unlike
    the algebraic layering this construction is not exact by itself.
    Raises SolveFailed when the solve does not converge.
    """
    q = int(q)
    if tri.domain.kind != dm.TRIANGLE or tet.domain.kind != dm.TETRAHEDRON:
        raise ValueError("geometric pyramid initialization needs a "
                         "triangle rule and a tetrahedron rule")
    if tri.degree < q or tet.degree < max(1, q - 2):
        raise ValueError(
            "geometric pyramid initialization at degree %d needs triangle "
            "degree >= %d and tetrahedron degree >= %d" % (q, q, max(1, q - 2))
        )
    dom = dm.domain(dm.PYRAMID)
    raw = []
    tpts, _ = tri.nodes_weights()
    for r, s in tpts:
        raw.append((mpfr(0), r + (1 + s) / 2, s))
    # Affine image of the reference tetrahedron onto the quarter wedge
    # with base corners (-1,1), (1,1), (1,-1) and apex (0,0,1).
    xpts, _ = tet.nodes_weights()
    half = mpfr(1) / 2
    for x, y, z in xpts:
        u, v, w = x + 1, y + 1, z + 1
        raw.append((
            -1 + u + v + half * w,
            1 - v - half * w,
            -1 + w,
        ))
    one = mpfr(1)
    kept = [p for p in raw
            if 0 <= p[0] <= p[1] < one and abs(p[2]) < one]
    expanded = []
    for p in kept:
        for g in dom.group:
            expanded.append(g(p))
    nodes = _dedupe(expanded, dm.coincidence_threshold())
    w0 = dom.volume() / len(nodes)
    start = dm.compress_nodes(nodes, [w0] * len(nodes), dom, degree=q)
    out = sv.lma_solve(start, config=config)
    if not out.converged:
        raise SolveFailed(
            "geometric pyramid initialization at degree %d did not "
            "converge (status %s)" % (q, out.status)
        )
    return out.rule


def init_pyramid_duffy(q, cube_rule=None):
    """Reference pyramid rule through the degenerate cube-to-pyramid map.

    The map sends (u, v, z) to (a u, a v, z) with a = (1-z)/2 and weight
    factor a^2; a polynomial of total degree q on the pyramid pulls back
    to total degree 2q+2 on the cube, so the cube rule must have at least
    that degree.  Without an explicit cube rule, a tensor Gauss-Legendre
    cube of degree 2q+3 is used.  Exact at degree q; kept as a benchmark
    baseline, not an initialization for reduction.
    """
    q = int(q)
    if cube_rule is None:
        line = gauss_legendre(q + 2, current_precision())
        cpts, cwts = [], []
        for xa, wa in zip(line.nodes, line.weights):
            for xb, wb in zip(line.nodes, line.weights):
                for xc, wc in zip(line.nodes, line.weights):
                    cpts.append((xa, xb, xc))
                    cwts.append(wa * wb * wc)
    else:
        if cube_rule.domain.kind != dm.CUBE:
            raise ValueError("Duffy pyramid initialization needs a cube "
                             "rule")
        if cube_rule.degree < 2 * q + 2:
            raise ValueError(
                "a degree-%d pyramid rule needs a cube rule of degree >= "
                "%d, got %d" % (q, 2 * q + 2, cube_rule.degree)
            )
        cpts, cwts = cube_rule.nodes_weights()
    pts, wts = [], []
    for (u, v, z), w in zip(cpts, cwts):
        a = (1 - z) / 2
        pts.append((a * u, a * v, z))
        wts.append(a * a * w)
    return dm.compress_nodes(pts, wts, dm.domain(dm.PYRAMID), degree=q)


def _symmetrized_simplex_init(kind, q):
    """Fallback triangle/tetrahedron initialization: a tensor rule through
    the collapsed map, symmetrized over the group with equal weight
    shares; exact at degree q because invariant moments are unchanged by
    averaging over the group."""
    from .basis import tensor_reference

    dom = dm.domain(kind)
    pts, wts = tensor_reference(kind, q)
    ng = len(dom.group)
    all_pts, all_wts = [], []
    for p, w in zip(pts, wts):
        share = w / ng
        for g in dom.group:
            all_pts.append(g(p))
            all_wts.append(share)
    return dm.compress_nodes(all_pts, all_wts, dom, degree=q)


def init_triangle(q):
    return _symmetrized_simplex_init(dm.TRIANGLE, q)


def init_tetrahedron(q):
    return _symmetrized_simplex_init(dm.TETRAHEDRON, q)


DAMPING_LADDER = ("0.001", "1")
JITTER_AMPLITUDES = ("0.05", "0.15", "0.3")


def _jittered(trial, amp, seed):
    """Multiplicatively perturb every parameter and weight of a rule.

    The perturbation stream is seeded deterministically so repeated runs
    take identical paths.  Parameters are clamped back into the open unit
    interval; weights stay positive because the amplitude is below one.
    """
    rng = random.Random(seed)
    amp = mpfr(amp)
    eps = mpfr("1e-6")
    orbs = []
    for o in trial.orbits:
        ps = []
        for p in o.params:
            u = 1 + amp * (2 * mpfr(rng.random()) - 1)
            ps.append(min(max(p * u, eps), 1 - eps))
        u = 1 + amp * (2 * mpfr(rng.random()) - 1)
        orbs.append(dm.Orbit(o.sclass, tuple(ps), o.weight * u))
    return trial.replace_orbits(tuple(orbs))


def _solve_attempt(trial, objective, config):
    """Solve with escalating initial damping and jittered restarts.

    A single initial damping value is path-fragile: light damping can race
    into a stalling basin that heavier damping walks around, and vice
    versa.  When every damping rung lands in the same local minimum, the
    start itself is retried under growing deterministic perturbations,
    which moves the solve into a neighboring basin while keeping runs
    reproducible.  Each attempt is an independent solve; the first
    converged one wins, and the last outcome is returned otherwise.
    """
    rungs = (config.damping_init,) + tuple(
        l for l in DAMPING_LADDER if mpfr(l) != mpfr(config.damping_init)
    )
    starts = [trial]
    tag = "%s:%d:%s" % (
        trial.domain.kind, trial.degree,
        ",".join(o.sid for o in trial.orbits),
    )
    for a, amp in enumerate(JITTER_AMPLITUDES):
        seed = zlib.crc32(("%s:%d" % (tag, a)).encode())
        starts.append(_jittered(trial, amp, seed))
    seen = []
    for start in starts:
        for lam0 in rungs:
            cfg = sv.SolverConfig(
                parameterization=config.parameterization,
                tolerance=config.tolerance,
                check_interval=config.check_interval,
                max_iterations=config.max_iterations,
                damping_init=lam0,
                damping_up=config.damping_up,
                damping_down=config.damping_down,
            )
            out = sv.lma_solve(start, objective, cfg)
            if out.converged:
                return out
            seen.append(out)
    return seen[-1]


def orbit_priority(orbit, p, mode=sv.CARTESIAN, scale="0.01"):
    """Elimination priority of an orbit given its symmetry's priority
    number p >= 1: p times the weight in Cartesian form, log(p)/s plus the
    exponential weight in exponential form.  Both orderings agree."""
    if not p >= 1:
        raise ValueError("priority number must be >= 1, got %s" % (p,))
    if mode == sv.CARTESIAN:
        return mpfr(p) * orbit.weight
    s = mpfr(scale)
    return gmpy2.log(mpfr(p)) / s + gmpy2.log(orbit.weight) / s


def _ranked_orbits(rule, prio_of, mode, scale):
    scored = []
    for k, o in enumerate(rule.orbits):
        p = prio_of.get(o.sid)
        if p is None:
            continue
        scored.append((orbit_priority(o, p, mode, scale), k))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [k for _, k in scored]


def remove_orbits(rule, q, symmetries, priorities, config=None, trace=None):
    """Eliminate orbits of the listed symmetry classes where possible.

    Orbits are attempted in ascending priority; an accepted elimination
    (the re-solve converges) restarts the scan, a failed one moves on, and
    a symmetry whose every current orbit has failed since the last
    acceptance is dropped from further scanning.  Stops at a single-orbit
    rule or when every candidate has been explored.

    Each trial rescales the surviving weights by total/(total - removed)
    so the volume moment stays exact, which keeps the re-solve start
    within reach of the staged progress check.
    """
    if config is None:
        config = sv.SolverConfig()
    objective = objective_basis(rule.domain.kind, q)
    mode = config.parameterization.mode
    scale = config.parameterization.scale
    prio_of = dict(zip(symmetries, priorities))
    dropped = set()

    def current_priorities():
        live = {s: p for s, p in prio_of.items() if s not in dropped}
        return _ranked_orbits(rule, live, mode, scale)

    order = current_priorities()
    i = 0
    while i < len(order):
        if len(rule.orbits) == 1:
            break
        k = order[i]
        target = rule.orbits[k]
        if target.sid in dropped:
            i += 1
            continue
        total = rule.weight_sum()
        f = total / (total - target.weight * target.size)
        trial = rule.replace_orbits(tuple(
            dm.Orbit(o.sclass, o.params, o.weight * f)
            for j, o in enumerate(rule.orbits) if j != k
        ))
        out = _solve_attempt(trial, objective, config)
        if out.converged:
            rule = out.rule
            if trace is not None:
                trace.log("eliminate", target.sid, k, None, "accepted",
                          out.residual, out.iterations, rule.node_count)
            order = current_priorities()
            i = 0
        else:
            if trace is not None:
                trace.log("eliminate", target.sid, k, None,
                          "rejected:" + out.status, out.residual,
                          out.iterations, rule.node_count)
            attempted = set(order[:i + 1])
            sid_members = {j for j, o in enumerate(rule.orbits)
                           if o.sid == target.sid}
            if sid_members <= attempted:
                dropped.add(target.sid)
            i += 1
    return rule


def collapse_orbits(rule, q, symmetries, threshold, priority_of=None,
                    config=None, trace=None):
    """Collapse orbits of the listed symmetries onto nearby symmetries
    with one parameter fewer.

    For each orbit, candidate target classes within the distance threshold
    are tried in ascending (priority number, class size) order; the
    replacement orbit sits at the projection of the representative with
    weight scaled by the orbit-size ratio, so the total weight carried is
    unchanged.  A replacement is kept only when the re-solve converges.
    """
    if config is None:
        config = sv.SolverConfig()
    if priority_of is None:
        priority_of = {}
    objective = objective_basis(rule.domain.kind, q)
    threshold = mpfr(threshold)
    scan = set(symmetries)
    k = 0
    while k < len(rule.orbits):
        o = rule.orbits[k]
        if o.sid not in scan:
            k += 1
            continue
        d = o.sclass.nparams
        targets = []
        for cls in rule.domain.classes:
            if cls.nparams != d - 1:
                continue
            try:
                params, dist = dm.project_to_symmetry(o.rep_point(), cls)
            except NoProjection:
                continue
            if dist < threshold:
                targets.append((priority_of.get(cls.sid, 1), cls.size,
                                cls.sid, cls, params))
        targets.sort(key=lambda t: (t[0], t[1], t[2]))
        for _p, _size, _sid, cls, params in targets:
            w_new = o.weight * o.size / cls.size
            try:
                replacement = dm.make_orbit(cls, params, w_new)
            except DegenerateOrbit:
                if trace is not None:
                    trace.log("collapse", o.sid, k, cls.sid,
                              "rejected:degenerate", "-", 0,
                              rule.node_count)
                continue
            trial = rule.replace_orbits(
                rule.orbits[:k] + (replacement,) + rule.orbits[k + 1:]
            )
            out = _solve_attempt(trial, objective, config)
            if out.converged:
                rule = out.rule
                if trace is not None:
                    trace.log("collapse", o.sid, k, cls.sid, "accepted",
                              out.residual, out.iterations, rule.node_count)
                break
            if trace is not None:
                trace.log("collapse", o.sid, k, cls.sid,
                          "rejected:" + out.status, out.residual,
                          out.iterations, rule.node_count)
        k += 1
    return rule


def remove_nodes(rule, q, plan=None, config=None):
    """Full reduction pass: per bundle, eliminate orbits of that bundle
    and then run collapse over this and every earlier bundle.  Returns the
    reduced rule and the attempt trace."""
    if plan is None:
        plan = default_plan(rule.domain.kind, q)
    if config is None:
        config = sv.SolverConfig()
    trace = EliminationTrace()
    prio_map = plan.priority_map()
    trace.log("start", "-", 0, None, "initial",
              residual(rule, objective_basis(rule.domain.kind, q)).value,
              0, rule.node_count)
    for i in range(len(plan.bundles)):
        rule = remove_orbits(rule, q, plan.bundles[i], plan.priorities[i],
                             config, trace)
        for j in range(i + 1):
            rule = collapse_orbits(rule, q, plan.bundles[j],
                                   plan.collapse_threshold, prio_map,
                                   config, trace)
    trace.log("finish", "-", 0, None, "reduced",
              residual(rule, objective_basis(rule.domain.kind, q)).value,
              0, rule.node_count)
    return rule, trace


_AUX_CACHE = {}


def _aux_rule(kind, q, config, aux):
    """Resolve an ingredient rule of exactly degree q, preferring the
    supplied source and falling back to self-generation.

    Only an exact-degree rule is accepted from the resolver: ingredient
    constructions are defined in terms of the degree-q rule, and a
    higher-degree substitute would inflate the construction and tie the
    result to unrelated stored rules."""
    if aux is not None:
        found = aux(kind, q)
        if found is not None and found.degree == int(q):
            return found
    key = (kind, int(q), current_precision())
    cached = _AUX_CACHE.get(key)
    if cached is None:
        cached, _trace = generate_rule(kind, q, config=config, aux=aux)
        _AUX_CACHE[key] = cached
    return cached


def _reduce_from(start, q, plan, config):
    """Certify a starting rule, then run the full reduction pass."""
    entry = sv.lma_solve(start, config=config)
    if not entry.converged:
        raise SolveFailed(
            "%s degree-%d initialization fails certification (status %s, "
            "residual %s)" % (start.domain.kind, q, entry.status,
                              entry.residual)
        )
    return remove_nodes(entry.rule, q, plan=plan, config=config)


def _generate_pyramid(q, config, plan, aux):
    """Reduce both pyramid constructions and keep the smaller result.

    The geometric assembly usually starts and ends smaller, but its orbit
    mix can lack classes the minimal rule needs (axis orbits, say), and
    then the algebraic layering reduces further.  Ties keep the geometric
    result, whose nodes spread more evenly.
    """
    candidates = []
    tri = _aux_rule(dm.TRIANGLE, q, config, aux)
    tet = _aux_rule(dm.TETRAHEDRON, max(1, q - 2), config, aux)
    try:
        start = init_pyramid_geometric(q, tri, tet, config=config)
    except SolveFailed:
        pass
    else:
        candidates.append(_reduce_from(start, q, plan, config))
    sq_degree = q if q % 2 else q + 1
    sq = _aux_rule(dm.SQUARE, sq_degree, config, aux)
    start = init_pyramid_algebraic(q, sq, config=config)
    candidates.append(_reduce_from(start, q, plan, config))
    return min(candidates, key=lambda rt: rt[0].node_count)


def generate_rule(kind, q, config=None, plan=None, aux=None):
    """End-to-end generation: initialize, certify the start, reduce.

    aux, when given, is a callable (kind, degree) -> QuadRule or None
    supplying exact-degree triangle/tetrahedron/square ingredient rules;
    missing ingredients are generated in-process with this same pipeline.
    Returns (rule, trace).
    """
    q = int(q)
    if config is None:
        config = sv.SolverConfig()
    if kind == dm.PYRAMID:
        return _generate_pyramid(q, config, plan, aux)
    if kind in (dm.SQUARE, dm.CUBE):
        start = init_square(q) if kind == dm.SQUARE else init_cube(q)
    elif kind == dm.TRIANGLE:
        start = init_triangle(q)
    elif kind == dm.TETRAHEDRON:
        start = init_tetrahedron(q)
    elif kind == dm.PRISM:
        tri = _aux_rule(dm.TRIANGLE, q, config, aux)
        start = init_prism(q, tri, config=config)
    else:
        raise ValueError("unknown domain kind %r" % (kind,))
    return _reduce_from(start, q, plan, config)
