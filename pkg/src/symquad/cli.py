"""Command-line front end.

Four commands cover the pipeline:

    symquad generate DOMAIN DEGREE[:DEGREE]   build rules, store in catalog
    symquad verify   DOMAIN DEGREE            re-certify a stored rule
    symquad convergence DOMAIN DEGREE -k ...  mesh-refinement error study
    symquad efficiency DOMAIN [LO:HI]         node savings vs reference rules

Every command is deterministic: two runs with the same arguments, catalog
contents, and mode produce byte-identical output.  Reports go to stdout
(CSV where tabular); diagnostics go to stderr.  The catalog root comes
from --catalog, else the SYMQUAD_CATALOG environment variable, else
``symquad-rules`` in the working directory; rules shipped with the package
are consulted read-only when the catalog lacks a degree.

Exit codes: 0 success; 1 generic/parse error; 2 usage error;
3 certification or convergence-rate failure; 4 solve failure; 5 missing
rule or auxiliary data.
"""

import argparse
import os
import sys

from . import domains as dm
from .build import ReductionPlan, default_collapse_threshold, default_plan, \
    generate_rule
from .errors import (
    EXIT_CERTIFICATION,
    EXIT_ERROR,
    EXIT_MISSING,
    EXIT_OK,
    EXIT_SOLVE,
    EXIT_USAGE,
    CertificationFailure,
    MissingData,
    NotSymmetric,
    PrecisionFloor,
    RuleParseError,
    SolveFailed,
    SymquadError,
    VersionError,
)
from .precision import FAST_PRECISION, FULL_PRECISION, working_precision
from .ruleio import (
    CATALOG_ENV,
    Catalog,
    default_aux,
    default_aux_counts,
    packaged_catalog,
    read_rule,
)
from .solver import SolverConfig
from .verify import assess, convergence_study, efficiency

MODES = {"fast": FAST_PRECISION, "full": FULL_PRECISION}
DEFAULT_CATALOG = "symquad-rules"


class UsageError(SymquadError):
    """Invalid argument combination, reported with the usage exit code."""


def _catalog_root(value):
    return value or os.environ.get(CATALOG_ENV) or DEFAULT_CATALOG


def _parse_degrees(text):
    """A degree or an inclusive LO:HI range."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            lo = hi = int(parts[0])
        elif len(parts) == 2:
            lo, hi = int(parts[0]), int(parts[1])
        else:
            raise ValueError
    except ValueError:
        raise UsageError("degree must be an integer or LO:HI range, got %r"
                         % text)
    if lo < 1 or hi < lo:
        raise UsageError("degree range %r is empty or not positive" % text)
    return lo, hi


def _parse_wavevector(text, dim, kind):
    parts = text.split(",")
    if len(parts) != dim:
        raise UsageError(
            "the %s needs %d comma-separated wavenumbers, got %r"
            % (kind, dim, text)
        )
    try:
        k = tuple(int(p) for p in parts)
    except ValueError:
        raise UsageError("wavenumbers must be integers, got %r" % text)
    if any(v < 1 for v in k):
        raise UsageError("wavenumbers must be positive, got %r" % text)
    return k


def _parse_plan(args, kind, degree):
    """Reduction-plan override from --bundles/--priorities, or None."""
    if args.bundles is None and args.priorities is None \
            and args.collapse_threshold is None:
        return None
    plan = default_plan(kind, degree)
    bundles, priorities = plan.bundles, plan.priorities
    if (args.bundles is None) != (args.priorities is None):
        raise UsageError("--bundles and --priorities must be given together")
    if args.bundles is not None:
        dom = dm.domain(kind)
        known = {c.sid for c in dom.classes}
        bundles = tuple(
            tuple(s.strip() for s in group.split(","))
            for group in args.bundles.split(";")
        )
        for group in bundles:
            for sid in group:
                if sid not in known:
                    raise UsageError("%s has no symmetry class %r"
                                     % (kind, sid))
        try:
            priorities = tuple(
                tuple(int(float(p)) for p in group.split(","))
                for group in args.priorities.split(";")
            )
        except ValueError:
            raise UsageError("--priorities must be numbers like 1;1e5,1;1")
        if tuple(len(g) for g in bundles) != \
                tuple(len(g) for g in priorities):
            raise UsageError("--bundles and --priorities shapes differ")
    threshold = args.collapse_threshold \
        if args.collapse_threshold is not None \
        else default_collapse_threshold(kind, degree)
    return ReductionPlan(bundles, priorities, threshold)


def _solver_config(args):
    return SolverConfig(
        tolerance=args.tolerance,
        check_interval=args.check_interval,
        max_iterations=args.max_iterations,
    )


def _load_rule(args, kind, degree):
    """Rule from --file when given, else catalog then packaged data."""
    if getattr(args, "file", None):
        return read_rule(args.file)
    for cat in (Catalog(_catalog_root(args.catalog)), packaged_catalog()):
        if cat.has(kind, degree):
            return cat.load(kind, degree)
    raise MissingData(
        "no stored %s rule of degree %d (catalog %s); run "
        "`symquad generate %s %d` first"
        % (kind, degree, _catalog_root(args.catalog), kind, degree)
    )


def _require_odd(kind, degree):
    if kind in (dm.SQUARE, dm.CUBE) and degree % 2 == 0:
        raise UsageError(
            "no even-degree fully symmetric rules exist on the %s (an odd "
            "monomial's moment forces them onto odd degrees); request an "
            "odd degree such as %d" % (kind, degree + 1)
        )


def cmd_generate(args, out):
    kind = args.domain
    lo, hi = _parse_degrees(args.degree)
    if lo == hi:
        _require_odd(kind, lo)
    degrees = [q for q in range(lo, hi + 1)
               if not (kind in (dm.SQUARE, dm.CUBE) and q % 2 == 0)]
    if not degrees:
        raise UsageError("degree range %s contains no admissible degree"
                         % args.degree)
    catalog = Catalog(_catalog_root(args.catalog))
    aux = default_aux(catalog)
    config = _solver_config(args)
    blocks = []
    for q in degrees:
        plan = _parse_plan(args, kind, q)
        rule, trace = generate_rule(kind, q, config=config, plan=plan,
                                    aux=aux)
        cert = assess(rule, tolerance=args.tolerance)
        if not cert.passed:
            raise CertificationFailure(cert.failure)
        stored = catalog.store(rule, tolerance=args.tolerance)
        lines = [
            "domain %s" % kind,
            "degree %d" % q,
            "nodes %d" % rule.node_count,
            "residual %s" % cert.residual,
        ]
        counts = rule.counts_by_class()
        for sid in sorted(counts):
            lines.append("orbits %s %d" % (sid, counts[sid]))
        lines.append(
            "catalog %s" % ("stored %s/q%d.rule" % (kind, q) if stored
                            else "kept existing %d-node rule"
                            % catalog.node_count(kind, q))
        )
        blocks.append("\n".join(lines))
        if args.trace:
            with open(args.trace, "a") as fh:
                fh.write("# %s degree %d\n" % (kind, q))
                fh.write(trace.to_text())
    out.write("\n\n".join(blocks) + "\n")
    return EXIT_OK


def cmd_verify(args, out):
    kind = args.domain
    lo, hi = _parse_degrees(args.degree)
    if lo != hi:
        raise UsageError("verify takes a single degree")
    rule = _load_rule(args, kind, lo)
    check = args.check_degree if args.check_degree is not None else \
        rule.degree
    cert = assess(rule, tolerance=args.tolerance, check_degree=check)
    flags = (
        ("residual-ok", cert.residual_ok),
        ("positive", cert.positive),
        ("interior", cert.interior),
        ("symmetric", cert.symmetric),
    )
    lines = [
        "domain %s" % cert.kind,
        "degree %d" % cert.degree,
        "nodes %d" % cert.node_count,
        "check-degree %d" % cert.check_degree,
        "residual %s" % cert.residual,
        "tolerance %s" % cert.tolerance,
    ]
    lines.extend("%s %s" % (name, "true" if ok else "false")
                 for name, ok in flags)
    lines.append("result %s" % ("pass" if cert.passed else "fail"))
    out.write("\n".join(lines) + "\n")
    return EXIT_OK if cert.passed else EXIT_CERTIFICATION


def cmd_convergence(args, out):
    kind = args.domain
    if kind in (dm.TRIANGLE, dm.TETRAHEDRON):
        raise UsageError(
            "convergence studies tile a box, which %s elements cannot do; "
            "use the square, cube, prism, or pyramid" % kind
        )
    lo, hi = _parse_degrees(args.degree)
    if lo != hi:
        raise UsageError("convergence takes a single degree")
    rule = _load_rule(args, kind, lo)
    k = _parse_wavevector(args.wavevector, rule.domain.dim, kind)
    if args.levels < 1:
        raise UsageError("--levels must be at least 1")
    report = convergence_study(rule, k, range(args.levels + 1))
    out.write(report.to_csv())
    target = rule.degree + 1
    try:
        rate = report.asymptotic_rate
    except PrecisionFloor:
        if report.errors[-1] < report.floor:
            sys.stderr.write(
                "all refinement levels sit at the %d-bit roundoff floor; "
                "no rate is measurable\n" % report.floor.precision
            )
            return EXIT_OK
        raise
    note = ""
    if kind == dm.PYRAMID and rule.degree % 2 == 0:
        note = (" (even-degree pyramid rules integrate one degree higher;"
                " expect about %d)" % (rule.degree + 2))
    sys.stderr.write(
        "asymptotic rate %.3f, target >= %d%s\n" % (float(rate), target,
                                                    note)
    )
    return EXIT_OK if rate >= target else EXIT_CERTIFICATION


def cmd_efficiency(args, out):
    kind = args.domain
    if kind in (dm.TRIANGLE, dm.TETRAHEDRON):
        raise UsageError(
            "no reference construction is defined for the %s; efficiency "
            "covers the square, cube, prism, and pyramid" % kind
        )
    catalog = Catalog(_catalog_root(args.catalog))
    degrees = sorted(set(catalog.degrees(kind))
                     | set(packaged_catalog().degrees(kind)))
    if args.degree is not None:
        lo, hi = _parse_degrees(args.degree)
        degrees = [q for q in degrees if lo <= q <= hi]
    if not degrees:
        raise MissingData("no stored %s rules to report on" % kind)
    counts = default_aux_counts(catalog)
    rows = ["q,n,n_r,e"]
    for q in degrees:
        n = catalog.node_count(kind, q)
        if n is None:
            n = packaged_catalog().node_count(kind, q)
        rep = efficiency(kind, q, n, aux_counts=counts)
        rows.append("%d,%d,%d,%.6f" % (rep.q, rep.n, rep.n_r,
                                       float(rep.efficiency)))
    out.write("\n".join(rows) + "\n")
    return EXIT_OK


def _parser():
    parser = argparse.ArgumentParser(
        prog="symquad",
        description="Fully symmetric positive interior quadrature rules "
                    "on the square, cube, prism, and pyramid.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_tolerance=True):
        p.add_argument("--mode", choices=sorted(MODES), default="fast",
                       help="fast: 113-bit, tolerance 1e-30 (default); "
                            "full: 256-bit, tolerance 1e-66")
        p.add_argument("--catalog", default=None,
                       help="catalog root (default: $%s or %s)"
                            % (CATALOG_ENV, DEFAULT_CATALOG))
        if with_tolerance:
            p.add_argument("--tolerance", default=None,
                           help="override the moment-residual tolerance")

    p = sub.add_parser("generate",
                       help="build rules and store them in the catalog")
    p.add_argument("domain", choices=dm.KINDS)
    p.add_argument("degree", help="degree or inclusive LO:HI range")
    common(p)
    p.add_argument("--check-interval", type=int, default=None,
                   help="staged-convergence interval (20..70)")
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--bundles", default=None,
                   help="elimination schedule, e.g. 'S4;S3,S2;S1'")
    p.add_argument("--priorities", default=None,
                   help="per-class priorities matching --bundles, "
                        "e.g. '1;1e5,1;1'")
    p.add_argument("--collapse-threshold", default=None,
                   help="maximum node distance for collapse trials")
    p.add_argument("--trace", default=None,
                   help="append the elimination trace to this file")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("verify", help="re-certify a stored rule")
    p.add_argument("domain", choices=dm.KINDS)
    p.add_argument("degree")
    common(p)
    p.add_argument("--file", default=None,
                   help="verify this rule file instead of the catalog")
    p.add_argument("--check-degree", type=int, default=None,
                   help="evaluate the residual at this degree "
                        "(default: the rule's stated degree)")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("convergence",
                       help="mesh-refinement study of an oscillatory "
                            "integral")
    p.add_argument("domain", choices=dm.KINDS)
    p.add_argument("degree")
    common(p, with_tolerance=False)
    p.set_defaults(tolerance=None)
    p.add_argument("-k", "--wavevector", required=True,
                   help="comma-separated integer wavenumbers, one per "
                        "dimension, e.g. 30,10,20")
    p.add_argument("--levels", type=int, default=None,
                   help="finest refinement level (default: 6 in 2D, "
                        "4 in 3D)")
    p.add_argument("--file", default=None,
                   help="use this rule file instead of the catalog")
    p.set_defaults(fn=cmd_convergence)

    p = sub.add_parser("efficiency",
                       help="node savings against reference constructions")
    p.add_argument("domain", choices=dm.KINDS)
    p.add_argument("degree", nargs="?", default=None,
                   help="restrict to a degree or LO:HI range")
    common(p, with_tolerance=False)
    p.set_defaults(tolerance=None)
    p.set_defaults(fn=cmd_efficiency)

    return parser


def main(argv=None, out=None):
    parser = _parser()
    args = parser.parse_args(argv)
    if out is None:
        out = sys.stdout
    if getattr(args, "levels", 0) is None:
        args.levels = 6 if dm.domain(args.domain).dim == 2 else 4
    try:
        with working_precision(MODES[args.mode]):
            return args.fn(args, out)
    except UsageError as exc:
        sys.stderr.write("usage error: %s\n" % exc)
        return EXIT_USAGE
    except (RuleParseError, VersionError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return EXIT_ERROR
    except (CertificationFailure, NotSymmetric) as exc:
        sys.stderr.write("certification failure: %s\n" % exc)
        return EXIT_CERTIFICATION
    except SolveFailed as exc:
        sys.stderr.write("solve failure: %s\n" % exc)
        return EXIT_SOLVE
    except MissingData as exc:
        sys.stderr.write("missing data: %s\n" % exc)
        return EXIT_MISSING
    except SymquadError as exc:
        sys.stderr.write("error: %s\n" % exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
