"""Three ways to seed a pyramid rule, and what reduction makes of them.

The pyramid is the odd one out: it is not a tensor product, its natural
monomial space involves negative powers of the height, and its symmetry
group is the smallest of the four product domains.  The builder knows
three constructions:

  * algebraic   -- Gauss-Jacobi layers in the height, a centered square
                   rule scaled into each layer,
  * duffy       -- a cube rule collapsed through the degenerate
                   cube-to-pyramid map (degree must be inflated to
                   survive the collapse),
  * geometric   -- a triangle rule on the four slanted faces' barycentric
                   split plus a tetrahedron rule inside.

All three give exact, fully symmetric, positive seeds; they just start
from very different node counts.

Run:  python3 demos/pyramid_constructions.py
"""

from symquad import build, domains
from symquad.basis import objective_basis, residual
from symquad.precision import FAST_PRECISION, working_precision
from symquad.ruleio import packaged_catalog

Q = 5

with working_precision(FAST_PRECISION):
    catalog = packaged_catalog()
    square = catalog.load(domains.SQUARE, Q)
    triangle = catalog.load(domains.TRIANGLE, Q)
    tetrahedron = catalog.load(domains.TETRAHEDRON, max(1, Q - 2))

    seeds = {
        "algebraic": build.init_pyramid_algebraic(Q, square),
        "duffy": build.init_pyramid_duffy(Q),
        "geometric": build.init_pyramid_geometric(Q, triangle, tetrahedron),
    }

    objective = objective_basis(domains.PYRAMID, Q)
    print("degree-%d pyramid seeds:" % Q)
    for name, seed in seeds.items():
        print("  %-10s %4d nodes, residual %.3e"
              % (name, seed.node_count, float(residual(seed,
                                                       objective).value)))

    # The full pipeline reduces whichever seed wins and returns the
    # smaller result; at this degree the minimum is 15 nodes.
    rule, _ = build.generate_rule(domains.PYRAMID, Q)
    print("\nreduced rule: %d nodes (%s)"
          % (rule.node_count,
             ", ".join("%s x%d" % (sid, count)
                       for sid, count in sorted(
                           rule.counts_by_class().items()))))
