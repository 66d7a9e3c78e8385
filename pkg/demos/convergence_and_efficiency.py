"""Measure what the degree certificate promises.

A degree-q rule drives an O(h^(q+1)) error on smooth integrands under
uniform mesh refinement.  This demo tiles the square with a degree-5
rule, integrates an oscillatory product of sines with a known closed
form, and prints the observed decay rate per refinement level.  It then
tabulates how many nodes the reduced rules save against tensor-product
references of the same degree.

Run:  python3 demos/convergence_and_efficiency.py
"""

from symquad import domains, verify
from symquad.precision import FAST_PRECISION, working_precision
from symquad.ruleio import default_aux_counts, packaged_catalog

with working_precision(FAST_PRECISION):
    catalog = packaged_catalog()

    rule = catalog.load(domains.SQUARE, 5)
    report = verify.convergence_study(rule, k=(6, 7), levels=range(5))
    print("degree-5 square rule on sin(6 pi x) sin(7 pi y):")
    print(report.to_csv())
    print("asymptotic rate %.3f (degree + 1 = %d expected)\n"
          % (float(report.asymptotic_rate()), rule.degree + 1))

    counts = default_aux_counts()
    print("node savings against the tensor-product reference:")
    print("%-8s %3s %5s %5s %6s" % ("domain", "q", "n", "n_r", "e"))
    for kind in (domains.SQUARE, domains.CUBE, domains.PRISM,
                 domains.PYRAMID):
        for q in catalog.degrees(kind):
            n = catalog.node_count(kind, q)
            rep = verify.efficiency(kind, q, n, aux_counts=counts)
            print("%-8s %3d %5d %5d %6.2f"
                  % (kind, q, n, rep.n_r, float(rep.efficiency)))
