"""Build a fully symmetric quadrature rule from scratch.

Starting from a tensor-product seed, the builder eliminates one orbit at
a time, re-solving the moment equations after each elimination, until no
orbit can be removed without losing certification.  The trace records
every attempt, so the whole run is reproducible.

Run:  python3 demos/build_a_rule.py
"""

from symquad import build, domains, verify
from symquad.precision import FAST_PRECISION, working_precision

with working_precision(FAST_PRECISION):
    # A degree-9 rule on [-1,1]^2.  The seed is a 5x5 Gauss tensor grid
    # (25 nodes); the known minimum for full symmetry is 20.
    rule, trace = build.generate_rule(domains.SQUARE, 9)

    print("degree %d rule on the %s: %d nodes in %d orbits"
          % (rule.degree, rule.domain.kind, rule.node_count,
             len(rule.orbits)))
    for orbit in rule.orbits:
        print("  %s  size %2d  weight %.12f"
              % (orbit.sid, orbit.size, float(orbit.weight)))

    # Every attempt, accepted or not, appears in the trace.
    accepted = [e for e in trace.entries
                if e[0] == "eliminate" and e[4] == "accepted"]
    print("\n%d orbit(s) eliminated on the way down:" % len(accepted))
    for _, sid, _, _, _, res, its, nodes in accepted:
        print("  removed one %s orbit -> %d nodes, residual %.3e "
              "after %d iterations" % (sid, nodes, float(res), its))

    # The certificate checks the moment residual at the stated degree,
    # weight positivity, strict interiority, and group invariance.
    cert = verify.assess(rule)
    print("\ncertificate: residual %.3e (tolerance %.1e), %s"
          % (float(cert.residual), float(cert.tolerance),
             "all checks passed" if cert.passed else cert.failure))
