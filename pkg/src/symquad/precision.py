"""Extended precision arithmetic and the small dense solves used elsewhere.

Everything numeric in this package runs on MPFR floats (via gmpy2) at an
explicit binary precision.  The two precisions used in practice are 113 bits
(quad-double equivalent, the fast mode) and 256 bits (the full mode), but any
precision in [53, 1024] is accepted.  Functions in this module either take a
``precision`` argument and install it for the duration of the call, or state
that they run at the caller's ambient precision.
"""

from contextlib import contextmanager
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpfr

from .errors import ConvergenceFailure, InversionFailure

MIN_PRECISION = 53
MAX_PRECISION = 1024
FAST_PRECISION = 113
FULL_PRECISION = 256


def check_precision(bits):
    """Validate a binary precision, returning it as an int."""
    bits = int(bits)
    if bits < MIN_PRECISION or bits > MAX_PRECISION:
        raise ValueError(
            "precision must lie in [%d, %d], got %d"
            % (MIN_PRECISION, MAX_PRECISION, bits)
        )
    return bits


@contextmanager
def working_precision(bits):
    """Context manager installing a binary working precision.

    All mpfr arithmetic inside the block rounds to ``bits`` bits.  The
    previous precision is restored on exit, including on exceptions.
    """
    bits = check_precision(bits)
    ctx = gmpy2.get_context()
    old = ctx.precision
    ctx.precision = bits
    try:
        yield bits
    finally:
        ctx.precision = old


def current_precision():
    """Binary precision of the ambient gmpy2 context."""
    return gmpy2.get_context().precision


def mpf(x):
    """Convert to mpfr at ambient precision.

    Strings are parsed in decimal; ints and fractions convert exactly when
    they fit the mantissa.
    """
    return mpfr(x)


def eps_for(bits=None):
    """2**-bits, the relative resolution at the given (or ambient) precision."""
    if bits is None:
        bits = current_precision()
    return mpfr(2) ** (-int(bits))


def ten_to(k):
    """10**k as an mpfr at ambient precision; k may be negative."""
    return mpfr(10) ** int(k)


def decimal_digits(bits):
    """Decimal digits that round-trip a ``bits``-bit mpfr, plus guard digits."""
    import math

    return int(math.ceil(bits * math.log10(2.0))) + 2


def format_mpfr(x):
    """Serialize an mpfr so that parsing the string at the same precision
    reproduces the value bit for bit."""
    return str(mpfr(x))


def parse_mpfr(text):
    """Parse a decimal string at ambient precision."""
    return mpfr(text.strip())


def vector_norm2(v):
    """Euclidean norm of a sequence of mpfr values at ambient precision."""
    acc = mpfr(0)
    for x in v:
        acc += x * x
    return gmpy2.sqrt(acc)


def legendre_pair(n, x):
    """Values (P_n(x), P_n'(x)) of the Legendre polynomial and derivative.

    Three-term recurrence at ambient precision; n >= 0.
    """
    if n == 0:
        return mpfr(1), mpfr(0)
    pm, p = mpfr(1), mpfr(x)
    for k in range(2, n + 1):
        pm, p = p, ((2 * k - 1) * x * p - (k - 1) * pm) / k
    # (1 - x^2) P_n' = n (P_{n-1} - x P_n)
    dp = n * (pm - x * p) / (1 - x * x)
    return p, dp


@dataclass(frozen=True)
class Rule1D:
    """Nodes and weights of a one dimensional rule on (-1, 1)."""

    nodes: tuple
    weights: tuple
    degree: int

    def __len__(self):
        return len(self.nodes)


_GL_CACHE = {}


def gauss_legendre(n, precision):
    """Gauss-Legendre rule with n nodes on (-1, 1), exact through degree 2n-1.

    Roots of P_n are found by Newton iteration from Chebyshev estimates and
    polished until the Newton correction drops below 2**-(precision - 8).
    Nodes come out sorted ascending and exactly symmetric about 0; weights
    are strictly positive and sum to 2 up to roundoff.

    Parameters
    ----------
    n : int
        Node count, n >= 1.
    precision : int
        Binary working precision for construction and for the result.

    Returns
    -------
    Rule1D
    """
    if n < 1:
        raise ValueError("need at least one node, got n=%d" % n)
    precision = check_precision(precision)
    key = (n, precision)
    cached = _GL_CACHE.get(key)
    if cached is not None:
        return cached

    with working_precision(precision):
        tol = mpfr(2) ** (-(precision - 8))
        pi = gmpy2.const_pi()
        pos_nodes = []
        pos_weights = []
        # Positive roots only; indices k = 1 .. n//2 give descending roots.
        for k in range(1, n // 2 + 1):
            x = gmpy2.cos(pi * (4 * k - 1) / (4 * n + 2))
            step = None
            for _ in range(200):
                p, dp = legendre_pair(n, x)
                step = p / dp
                x = x - step
                if abs(step) <= abs(x) * eps_for(precision) * 4:
                    break
            p, dp = legendre_pair(n, x)
            if abs(p / dp) > tol:
                raise ConvergenceFailure(
                    "Legendre root %d of %d stalled at precision %d"
                    % (k, n, precision)
                )
            w = 2 / ((1 - x * x) * dp * dp)
            pos_nodes.append(x)
            pos_weights.append(w)

        nodes = [-x for x in pos_nodes]
        weights = list(pos_weights)
        if n % 2 == 1:
            _, dp = legendre_pair(n, mpfr(0))
            nodes.append(mpfr(0))
            weights.append(2 / (dp * dp))
        nodes.extend(reversed(pos_nodes))
        weights.extend(reversed(pos_weights))

    rule = Rule1D(tuple(nodes), tuple(weights), 2 * n - 1)
    _GL_CACHE[key] = rule
    return rule


def solve_damped_normal(jac, resid, damping):
    """Solve the damped normal equations of a least squares step.

    Builds A = J^T J + damping * diag(J^T J) and g = J^T r, then solves
    A dv = g by symmetric elimination with diagonal pivoting.  The step dv
    decreases the linearized residual ||r - J dv||.

    Runs at ambient precision.  Raises InversionFailure when a pivot falls
    below 2**-(precision/2) times the largest pivot encountered, which is
    the rank-deficiency signal the caller uses to switch parameterizations.

    Parameters
    ----------
    jac : list of rows
        The m x n Jacobian of the residual vector with respect to the
        variables (m rows of length n).
    resid : sequence
        The length-m residual vector.
    damping : mpfr
        Levenberg-Marquardt parameter, >= 0.

    Returns
    -------
    list of mpfr
        The step dv of length n.
    """
    m = len(jac)
    if m == 0:
        return []
    n = len(jac[0])
    a = [[mpfr(0)] * n for _ in range(n)]
    g = [mpfr(0)] * n
    for i in range(m):
        row = jac[i]
        ri = resid[i]
        for p in range(n):
            jp = row[p]
            g[p] += jp * ri
            arow = a[p]
            for q in range(p, n):
                arow[q] += jp * row[q]
    for p in range(n):
        a[p][p] += damping * a[p][p]
        for q in range(p):
            a[p][q] = a[q][p]

    # LDL^T with symmetric (diagonal) pivoting.
    threshold_ratio = mpfr(2) ** (-(current_precision() // 2))
    perm = list(range(n))
    max_pivot = mpfr(0)
    for k in range(n):
        # Pick the largest remaining diagonal entry.
        best, best_val = k, abs(a[perm[k]][perm[k]])
        for j in range(k + 1, n):
            val = abs(a[perm[j]][perm[j]])
            if val > best_val:
                best, best_val = j, val
        perm[k], perm[best] = perm[best], perm[k]
        piv = a[perm[k]][perm[k]]
        if best_val > max_pivot:
            max_pivot = best_val
        if best_val <= threshold_ratio * max_pivot or best_val == 0:
            raise InversionFailure(
                "pivot %d of %d below rank threshold" % (k + 1, n)
            )
        for i in range(k + 1, n):
            f = a[perm[i]][perm[k]] / piv
            if f == 0:
                continue
            for j in range(k + 1, n):
                a[perm[i]][perm[j]] -= f * a[perm[k]][perm[j]]
            a[perm[i]][perm[k]] = f

    # Forward substitution with unit lower factor, then diagonal, then back.
    y = [g[perm[i]] for i in range(n)]
    for i in range(1, n):
        for j in range(i):
            y[i] -= a[perm[i]][perm[j]] * y[j]
    for i in range(n):
        y[i] /= a[perm[i]][perm[i]]
    for i in range(n - 2, -1, -1):
        for j in range(i + 1, n):
            y[i] -= a[perm[j]][perm[i]] * y[j]

    dv = [mpfr(0)] * n
    for i in range(n):
        dv[perm[i]] = y[i]
    return dv
