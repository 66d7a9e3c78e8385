"""Damped least-squares driver for the moment equations of symmetric rules.

The free variables are the normalized orbit parameters and the orbit
weights.  Two parameterizations are supported: Cartesian (the variables
themselves, kept feasible by scaling each step back from the boundary) and
exponential (a logistic change of variables for the parameters and a log
change for the weights, which makes every iterate feasible by
construction).  The exponential mode is the default; when its normal
equations become numerically singular the solver re-encodes the current
point in Cartesian variables for that single step and then returns to
exponential mode.
"""

from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpfr

from . import domains as dm
from .basis import objective_basis
from .errors import DegenerateOrbit, InversionFailure, NoProjection, ZeroStep
from .precision import (
    FULL_PRECISION,
    current_precision,
    solve_damped_normal,
    ten_to,
    vector_norm2,
)

CARTESIAN = "cartesian"
EXPONENTIAL = "exponential"

CONVERGED = "Converged"
STALLED_AT_CHECK = "StalledAtCheck"
MAX_ITERATIONS = "MaxIterations"
DEGENERATE = "Degenerate"


def default_tolerance():
    """Moment-defect target at ambient precision: 10^-66 at full working
    precision and above, 10^-30 below it."""
    return ten_to(-66) if current_precision() >= FULL_PRECISION else ten_to(-30)


@dataclass(frozen=True)
class Parameterization:
    """Choice of solver variables.

    mode "cartesian" uses the normalized parameters and weights directly;
    mode "exponential" substitutes x = 1/(1+e^(-s z)) for each parameter
    and w = e^(s z) for each weight.  Both maps are bijections onto the
    feasible set, so exponential iterates can never leave it.
    """

    mode: str = EXPONENTIAL
    scale: str = "0.01"

    def __post_init__(self):
        if self.mode not in (CARTESIAN, EXPONENTIAL):
            raise ValueError("unknown parameterization mode %r" % self.mode)

    def scale_value(self):
        return mpfr(self.scale)


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of a single solve.

    check_interval is the staged-convergence interval: at iteration
    check_interval * k the residual must have dropped below the initial
    residual divided by 10^k or the solve stops.  When None it is derived
    from the variable count as clamp(20 + 2*n_v, 20, 70).
    """

    parameterization: Parameterization = field(default_factory=Parameterization)
    tolerance: object = None
    check_interval: object = None
    max_iterations: int = 500
    damping_init: str = "0.001"
    damping_up: int = 2
    damping_down: int = 3

    def __post_init__(self):
        if self.tolerance is not None and not mpfr(self.tolerance) > 0:
            raise ValueError("tolerance must be positive")
        if self.check_interval is not None and not (
            20 <= int(self.check_interval) <= 70
        ):
            raise ValueError("check_interval must lie in [20, 70]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class SolveOutcome:
    """Result of lma_solve.

    residual_history holds the entry residual followed by the residual of
    every accepted step.  status is Converged exactly when the final
    residual is below the tolerance.  fallback_events counts the steps on
    which the exponential parameterization had to revert to Cartesian.
    """

    rule: object
    residual_history: tuple
    status: str
    iterations: int
    fallback_events: int

    @property
    def residual(self):
        return self.residual_history[-1]

    @property
    def converged(self):
        return self.status == CONVERGED


def _blocks_of(rule):
    return [(tuple(o.params), o.weight) for o in rule.orbits]


def encode(rule, param):
    """Flatten a rule into the solver variable vector.

    Per orbit, the block is [parameters..., weight].  Exponential mode
    stores z with parameter = 1/(1+e^(-s z)) and weight = e^(s z);
    Cartesian mode stores the values themselves.
    """
    v = []
    if param.mode == CARTESIAN:
        for o in rule.orbits:
            v.extend(mpfr(p) for p in o.params)
            v.append(mpfr(o.weight))
        return v
    s = param.scale_value()
    for o in rule.orbits:
        for p in o.params:
            p = mpfr(p)
            v.append(gmpy2.log(p / (1 - p)) / s)
        v.append(gmpy2.log(mpfr(o.weight)) / s)
    return v


def decode(rule, v, param):
    """Rebuild a rule with the same orbit classes from a variable vector.

    Inverse of encode up to roundoff; parameters are validated but not
    re-canonicalized, so decode(encode(r)) reproduces r's parameters.
    """
    s = param.scale_value() if param.mode == EXPONENTIAL else None
    orbits = []
    pos = 0
    for o in rule.orbits:
        k = o.sclass.nparams
        block = v[pos:pos + k + 1]
        pos += k + 1
        if param.mode == EXPONENTIAL:
            params = tuple(1 / (1 + gmpy2.exp(-s * z)) for z in block[:k])
            weight = gmpy2.exp(s * block[k])
        else:
            params = tuple(mpfr(z) for z in block[:k])
            weight = mpfr(block[k])
        orbits.append(dm.make_orbit(o.sclass, params, weight,
                                    canonicalize=False))
    if pos != len(v):
        raise ValueError("variable vector length %d does not match rule "
                         "structure (%d expected)" % (len(v), pos))
    return dm.QuadRule(rule.domain, rule.degree, tuple(orbits))


def project_step(v, dv, bounds):
    """Scale a Cartesian step back so the iterate stays strictly feasible.

    bounds is a per-variable sequence of (low, high) with high None for
    unbounded-above variables.  Returns alpha * dv where alpha in (0, 1]
    is the largest fraction keeping every coordinate at least a margin of
    2^-precision inside its bounds; alpha = 1 when the full step is
    feasible.  Raises ZeroStep when the admissible fraction underflows to
    zero, which means the iterate is pinned at a boundary.
    """
    eps = mpfr(2) ** (-current_precision())
    alpha = mpfr(1)
    for x, d, (lo, hi) in zip(v, dv, bounds):
        if d > 0 and hi is not None:
            limit = hi - eps
            if x + d > limit:
                frac = (limit - x) / d
                if frac < alpha:
                    alpha = frac
        elif d < 0:
            limit = lo + eps
            if x + d < limit:
                frac = (limit - x) / d
                if frac < alpha:
                    alpha = frac

    def feasible(step):
        for x, d, (lo, hi) in zip(v, step, bounds):
            nx = x + d
            if not nx > lo:
                return False
            if hi is not None and not nx < hi:
                return False
        return True

    # The fraction can round up to a value (even 1) that still lands a
    # coordinate exactly on its bound; back off until strictly inside.
    shrink = 1 - mpfr(2) ** (-(current_precision() // 2))
    for _ in range(64):
        if not alpha > 0:
            break
        step = [alpha * d for d in dv]
        if feasible(step):
            return step
        alpha *= shrink
    raise ZeroStep("step underflows to zero at a boundary")


def _residual_blocks(objective, structure, blocks):
    r = objective.moments()
    m = objective.size
    for cls, (params, w) in zip(structure, blocks):
        vals = objective.values(cls.rep_point(params))
        c = cls.size * w
        for i in range(m):
            r[i] -= c * vals[i]
    return r


def _jacobian_blocks(objective, structure, blocks):
    """Cartesian Jacobian d(residual)/d(variables), m rows by n_v columns,
    with per-orbit column blocks [parameters..., weight]."""
    m = objective.size
    n = sum(cls.nparams + 1 for cls in structure)
    jac = [[mpfr(0)] * n for _ in range(m)]
    col = 0
    for cls, (params, w) in zip(structure, blocks):
        x = cls.rep_point(params)
        vals, grads = objective.values_grads(x)
        jrep = cls.rep_jacobian(params)
        c = mpfr(cls.size)
        cw = c * w
        for k in range(cls.nparams):
            drow = jrep[k]
            dim = len(drow)
            jcol = col + k
            for i in range(m):
                g = grads[i]
                acc = g[0] * drow[0]
                for d in range(1, dim):
                    acc += g[d] * drow[d]
                jac[i][jcol] = -cw * acc
        wcol = col + cls.nparams
        for i in range(m):
            jac[i][wcol] = -c * vals[i]
        col += cls.nparams + 1
    return jac


def residual_jacobian(rule, objective=None):
    """Cartesian Jacobian of the moment defect of a rule; one column per
    orbit parameter and weight, in orbit order."""
    if objective is None:
        objective = objective_basis(rule.domain.kind, rule.degree)
    return _jacobian_blocks(
        objective, [o.sclass for o in rule.orbits], _blocks_of(rule)
    )


def _orbit_separation_ok(structure, blocks, threshold):
    """True while no orbit has two expanded nodes closer than threshold."""
    t2 = threshold * threshold
    for cls, (params, _w) in zip(structure, blocks):
        if cls.size == 1:
            continue
        rep = cls.rep_point(params)
        nodes = [g(rep) for g in cls.transversal]
        for i in range(len(nodes)):
            xi = nodes[i]
            for j in range(i + 1, len(nodes)):
                xj = nodes[j]
                d2 = mpfr(0)
                for a in range(len(xi)):
                    diff = xi[a] - xj[a]
                    d2 += diff * diff
                if d2 < t2:
                    return False
    return True


def _cartesian_flat(blocks):
    v, bounds = [], []
    for params, w in blocks:
        for p in params:
            v.append(p)
            bounds.append((mpfr(0), mpfr(1)))
        v.append(w)
        bounds.append((mpfr(0), None))
    return v, bounds


def _unflatten(structure, v):
    blocks = []
    pos = 0
    for cls in structure:
        k = cls.nparams
        blocks.append((tuple(v[pos:pos + k]), v[pos + k]))
        pos += k + 1
    return blocks


def _rebuild(rule, structure, blocks):
    orbits = []
    for cls, (params, w) in zip(structure, blocks):
        try:
            orbits.append(dm.make_orbit(cls, params, w))
        except (DegenerateOrbit, NoProjection):
            return dm.QuadRule(
                rule.domain, rule.degree,
                tuple(dm.Orbit(c, p, ww)
                      for c, (p, ww) in zip(structure, blocks)),
            ), False
    return dm.QuadRule(rule.domain, rule.degree, tuple(orbits)), True


def _damped_step(jac, resid, damping):
    """Solve the damped normal equations, skipping identically-zero columns.

    A variable whose residual derivative vanishes identically (an orbit
    coordinate the objective basis cannot see, e.g. in a degree-1 system
    whose only moment is the volume) makes the damped normal matrix
    singular.  Its minimal-norm update is zero, so such columns are
    dropped before the solve and their step entries set to zero.
    """
    n = len(jac[0])
    live = [j for j in range(n) if any(row[j] for row in jac)]
    if len(live) == n:
        return solve_damped_normal(jac, resid, damping)
    if not live:
        raise InversionFailure("all Jacobian columns vanish")
    reduced = [[row[j] for j in live] for row in jac]
    partial = solve_damped_normal(reduced, resid, damping)
    dv = [mpfr(0)] * n
    for k, j in enumerate(live):
        dv[j] = partial[k]
    return dv


def lma_solve(rule, objective=None, config=None):
    """Drive the moment defect of a rule toward zero at fixed structure.

    The orbit classes of the input rule are kept; only parameters and
    weights move.  Every accepted step strictly decreases the residual and
    keeps all iterates feasible (positive weights, parameters in the open
    unit cube).  Stops when the residual falls below the tolerance, when a
    staged progress check fails, when an orbit degenerates (two of its
    expanded nodes coincide), or at the iteration cap.
    """
    if objective is None:
        objective = objective_basis(rule.domain.kind, rule.degree)
    if config is None:
        config = SolverConfig()
    param = config.parameterization
    s = param.scale_value()
    tol = mpfr(config.tolerance) if config.tolerance is not None \
        else default_tolerance()
    structure = [o.sclass for o in rule.orbits]
    blocks = _blocks_of(rule)
    n_v = sum(cls.nparams + 1 for cls in structure)
    if config.check_interval is not None:
        check = int(config.check_interval)
    else:
        check = min(70, max(20, 20 + 2 * n_v))
    sep_threshold = dm.coincidence_threshold()

    r = _residual_blocks(objective, structure, blocks)
    res = vector_norm2(r)
    history = [res]
    if res < tol:
        out_rule, _ok = _rebuild(rule, structure, blocks)
        return SolveOutcome(out_rule, tuple(history), CONVERGED, 0, 0)

    init_res = res
    lam = mpfr(config.damping_init)
    iterations = 0
    fallbacks = 0
    status = MAX_ITERATIONS

    while iterations < config.max_iterations:
        iterations += 1
        jac = _jacobian_blocks(objective, structure, blocks)
        trial = None
        if param.mode == EXPONENTIAL:
            chain = []
            for params, w in blocks:
                for p in params:
                    chain.append(s * p * (1 - p))
                chain.append(s * w)
            jexp = [[row[j] * chain[j] for j in range(n_v)] for row in jac]
            try:
                dv = _damped_step(jexp, r, lam)
                new_blocks = []
                pos = 0
                for params, w in blocks:
                    new_params = []
                    for p in params:
                        z = gmpy2.log(p / (1 - p)) / s - dv[pos]
                        new_params.append(1 / (1 + gmpy2.exp(-s * z)))
                        pos += 1
                    zw = gmpy2.log(w) / s - dv[pos]
                    pos += 1
                    new_blocks.append((tuple(new_params), gmpy2.exp(s * zw)))
                trial = new_blocks
            except InversionFailure:
                fallbacks += 1
                try:
                    dv = _damped_step(jac, r, lam)
                    v, bounds = _cartesian_flat(blocks)
                    step = project_step(v, [-d for d in dv], bounds)
                    trial = _unflatten(
                        structure, [a + b for a, b in zip(v, step)]
                    )
                except (InversionFailure, ZeroStep):
                    trial = None
        else:
            try:
                dv = _damped_step(jac, r, lam)
                v, bounds = _cartesian_flat(blocks)
                step = project_step(v, [-d for d in dv], bounds)
                trial = _unflatten(
                    structure, [a + b for a, b in zip(v, step)]
                )
            except (InversionFailure, ZeroStep):
                trial = None

        if trial is not None:
            r_t = _residual_blocks(objective, structure, trial)
            res_t = vector_norm2(r_t)
        if trial is not None and res_t < res:
            blocks = trial
            r, res = r_t, res_t
            history.append(res)
            lam /= config.damping_down
            if res < tol:
                status = CONVERGED
                break
            if not _orbit_separation_ok(structure, blocks, sep_threshold):
                status = DEGENERATE
                break
        else:
            lam *= config.damping_up

        if iterations % check == 0:
            k = iterations // check
            if not res < init_res / ten_to(k):
                status = STALLED_AT_CHECK
                break

    out_rule, clean = _rebuild(rule, structure, blocks)
    if not clean:
        # Rounding can saturate an exponential parameter to exactly 0 or 1,
        # leaving a node on the boundary: the residual may have converged,
        # but the result is not a valid interior rule.
        status = DEGENERATE
    return SolveOutcome(out_rule, tuple(history), status, iterations,
                        fallbacks)
