"""Reading, writing, and cataloguing quadrature rules.

A rule file is line-oriented text.  The header states the format version,
domain, degree, precision in bits, node count, and the moment residual at
the time of writing.  One ``orbit`` line per orbit carries the symmetry
class id, the normalized parameters, and the shared weight, serialized with
enough decimal digits to reproduce every value bit for bit at the stated
precision.  An optional ``expanded`` section lists every node with its
weight; on read it must agree with the expansion of the orbit section.
Blank lines and ``#`` comments are ignored everywhere.

    symquad rule format 1
    domain square
    degree 7
    precision 113
    nodes 12
    residual 4.33e-34
    orbits 2
    orbit S3 0.345... 0.217...
    orbit S4 0.934... 0.112... 0.303...
    expanded 12
    node -0.309... -0.309... 0.217...
    ...
    end

Reading re-certifies the rule: values are parsed at the stated precision,
the moment residual is recomputed there, and it must reproduce the stated
value within a factor of ten (plus a roundoff floor).  Structural problems
raise RuleParseError with the offending line number; a rule that parses but
fails re-verification raises CertificationFailure; an unsupported format
version raises VersionError.

A Catalog stores one best (minimum node count) rule per domain and degree
under ``<root>/<domain>/q<degree>.rule``, with a ``manifest.json`` of
checksums that is verified on every load.  Writers serialize through an
exclusive ``manifest.lock`` file, and an insertion replaces an existing
rule only when it has strictly fewer nodes.
"""

import hashlib
import json
import os
import re
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path

import gmpy2
from gmpy2 import mpfr

from . import domains as dm
from .basis import residual
from .errors import (
    CertificationFailure,
    DegenerateOrbit,
    MissingData,
    RuleParseError,
    SymquadError,
    VersionError,
)
from .precision import (
    MIN_PRECISION,
    check_precision,
    current_precision,
    format_mpfr,
    parse_mpfr,
    working_precision,
)
from .verify import certify

FORMAT_VERSION = 1
CATALOG_ENV = "SYMQUAD_CATALOG"

_HEADER_FIELDS = ("domain", "degree", "precision", "nodes", "residual")
_RULE_NAME = re.compile(r"^q(\d+)\.rule$")


def _rule_bits(rule):
    """Highest precision carried by any value of the rule, floored at the
    ambient precision so freshly computed residuals are representable."""
    bits = current_precision()
    for o in rule.orbits:
        for p in o.params:
            bits = max(bits, p.precision)
        bits = max(bits, o.weight.precision)
    return max(bits, MIN_PRECISION)


def dumps_rule(rule, expanded=True, bits=None):
    """Serialize a rule to text.

    The stated precision defaults to the highest precision carried by the
    rule's values (at least the ambient precision), and the residual is
    recomputed at that precision so that a reader can reproduce it.
    """
    if bits is None:
        bits = _rule_bits(rule)
    check_precision(bits)
    with working_precision(bits):
        res = residual(rule).value
        lines = [
            "symquad rule format %d" % FORMAT_VERSION,
            "domain %s" % rule.domain.kind,
            "degree %d" % rule.degree,
            "precision %d" % bits,
            "nodes %d" % rule.node_count,
            "residual %s" % format_mpfr(res),
            "orbits %d" % len(rule.orbits),
        ]
        for o in rule.orbits:
            parts = ["orbit", o.sid]
            parts.extend(format_mpfr(p) for p in o.params)
            parts.append(format_mpfr(o.weight))
            lines.append(" ".join(parts))
        if expanded:
            pts, wts = rule.nodes_weights()
            lines.append("expanded %d" % len(pts))
            for x, w in zip(pts, wts):
                parts = ["node"]
                parts.extend(format_mpfr(c) for c in x)
                parts.append(format_mpfr(w))
                lines.append(" ".join(parts))
        lines.append("end")
    return "\n".join(lines) + "\n"


def write_rule(rule, path, expanded=True, bits=None):
    """Serialize a rule to ``path``; returns the path."""
    path = Path(path)
    path.write_text(dumps_rule(rule, expanded=expanded, bits=bits))
    return path


def _significant_lines(text):
    out = []
    for i, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            out.append((i, body.split()))
    return out


def _take(lines, cursor, what):
    if cursor >= len(lines):
        last = lines[-1][0] if lines else 0
        raise RuleParseError("unexpected end of file, wanted %s" % what, last)
    return lines[cursor]


def _int_field(tokens, lineno, what):
    try:
        return int(tokens[-1])
    except ValueError:
        raise RuleParseError("%s is not an integer: %r" % (what, tokens[-1]),
                             lineno)


def _number(token, lineno, what):
    try:
        return parse_mpfr(token)
    except ValueError:
        raise RuleParseError("%s is not a number: %r" % (what, token), lineno)


def loads_rule(text):
    """Parse a rule file from text and re-certify it.

    Returns the rule with every value carried at the stated precision;
    serializing it again at that precision reproduces the input values bit
    for bit.
    """
    lines = _significant_lines(text)
    lineno, tokens = _take(lines, 0, "format line")
    if tokens[:3] != ["symquad", "rule", "format"] or len(tokens) != 4:
        raise RuleParseError("not a rule file (bad format line)", lineno)
    version = _int_field(tokens, lineno, "format version")
    if version != FORMAT_VERSION:
        raise VersionError(
            "unsupported rule format version %d (supported: %d)"
            % (version, FORMAT_VERSION)
        )

    fields = {}
    cursor = 1
    while True:
        lineno, tokens = _take(lines, cursor, "header field")
        if tokens[0] == "orbits":
            break
        if tokens[0] not in _HEADER_FIELDS:
            raise RuleParseError("unknown header field %r" % tokens[0], lineno)
        if tokens[0] in fields:
            raise RuleParseError("duplicate header field %r" % tokens[0],
                                 lineno)
        if len(tokens) != 2:
            raise RuleParseError("header field %r needs one value" % tokens[0],
                                 lineno)
        fields[tokens[0]] = (lineno, tokens[1])
        cursor += 1
    missing = [f for f in _HEADER_FIELDS if f not in fields]
    if missing:
        raise RuleParseError("missing header fields: %s" % ", ".join(missing),
                             lineno)

    kind = fields["domain"][1]
    try:
        dom = dm.domain(kind)
    except KeyError as exc:
        raise RuleParseError(str(exc.args[0]), fields["domain"][0])
    degree = _int_field(("degree", fields["degree"][1]), fields["degree"][0],
                        "degree")
    bits = _int_field(("precision", fields["precision"][1]),
                      fields["precision"][0], "precision")
    node_count = _int_field(("nodes", fields["nodes"][1]), fields["nodes"][0],
                            "node count")
    if degree < 1:
        raise RuleParseError("degree must be positive", fields["degree"][0])
    try:
        check_precision(bits)
    except ValueError as exc:
        raise RuleParseError(str(exc), fields["precision"][0])

    if len(tokens) != 2:
        raise RuleParseError("orbit count line needs one value", lineno)
    orbit_count = _int_field(tokens, lineno, "orbit count")
    if orbit_count < 1:
        raise RuleParseError("orbit count must be positive", lineno)
    cursor += 1

    with working_precision(bits):
        stated = _number(fields["residual"][1], fields["residual"][0],
                         "residual")
        orbits = []
        for _ in range(orbit_count):
            lineno, tokens = _take(lines, cursor, "orbit line")
            if tokens[0] != "orbit":
                raise RuleParseError("expected an orbit line", lineno)
            if len(tokens) < 3:
                raise RuleParseError("orbit line needs a class id and a "
                                     "weight", lineno)
            try:
                sclass = dom.class_by_id(tokens[1])
            except KeyError as exc:
                raise RuleParseError(str(exc), lineno)
            want = sclass.nparams + 3
            if len(tokens) != want:
                raise RuleParseError(
                    "class %s takes %d parameters plus a weight, line has "
                    "%d values" % (tokens[1], sclass.nparams,
                                   len(tokens) - 2),
                    lineno,
                )
            params = [_number(t, lineno, "orbit parameter")
                      for t in tokens[2:-1]]
            weight = _number(tokens[-1], lineno, "orbit weight")
            try:
                orbits.append(
                    dm.make_orbit(sclass, params, weight, canonicalize=False)
                )
            except (DegenerateOrbit, ValueError) as exc:
                raise CertificationFailure("line %d: %s" % (lineno, exc))
            cursor += 1

        rule = dm.QuadRule(dom, degree, orbits)
        if rule.node_count != node_count:
            raise RuleParseError(
                "header states %d nodes but the orbits expand to %d"
                % (node_count, rule.node_count),
                fields["nodes"][0],
            )

        lineno, tokens = _take(lines, cursor, "expanded section or end")
        if tokens[0] == "expanded":
            if len(tokens) != 2:
                raise RuleParseError("expanded count line needs one value",
                                     lineno)
            expanded_count = _int_field(tokens, lineno, "expanded count")
            if expanded_count != node_count:
                raise RuleParseError(
                    "expanded section states %d nodes, header states %d"
                    % (expanded_count, node_count),
                    lineno,
                )
            cursor += 1
            _check_expanded(rule, lines, cursor, expanded_count, bits)
            cursor += expanded_count
            lineno, tokens = _take(lines, cursor, "end line")
        if tokens != ["end"]:
            raise RuleParseError("expected the end line", lineno)
        cursor += 1
        if cursor != len(lines):
            raise RuleParseError("content after the end line",
                                 lines[cursor][0])

        recomputed = residual(rule).value
        floor = gmpy2.exp2(-(bits - 12))
        if not recomputed <= 10 * stated + floor:
            raise CertificationFailure(
                "%s degree-%d rule: stated residual %s is not reproducible "
                "(recomputed %s at %d bits)"
                % (kind, degree, stated, recomputed, bits)
            )
    return rule


def _check_expanded(rule, lines, cursor, count, bits):
    """Match each ``node`` line against the orbit expansion.

    Node order is free, but every expanded node must be matched exactly
    once, with its weight, to within 2^-(bits-16).
    """
    dim = rule.domain.dim
    pts, wts = rule.nodes_weights()
    index = dm._NodeIndex(pts)
    tol = gmpy2.exp2(-(bits - 16))
    scale = max(abs(w) for w in wts)
    used = [False] * len(pts)
    for k in range(count):
        lineno, tokens = _take(lines, cursor + k, "node line")
        if tokens[0] != "node":
            raise RuleParseError("expected a node line", lineno)
        if len(tokens) != dim + 2:
            raise RuleParseError(
                "node line needs %d coordinates and a weight" % dim, lineno
            )
        x = [_number(t, lineno, "node coordinate") for t in tokens[1:-1]]
        w = _number(tokens[-1], lineno, "node weight")
        hit = None
        for d, j in sorted(index.near(x, tol)):
            if not used[j] and abs(wts[j] - w) <= tol * scale:
                hit = j
                break
        if hit is None:
            raise RuleParseError(
                "node does not match the orbit expansion", lineno
            )
        used[hit] = True


def read_rule(path):
    """Parse and re-certify the rule file at ``path``."""
    return loads_rule(Path(path).read_text())


def ingest_external(path, kind, degree, tolerance=None):
    """Import a plain node table as a fully symmetric rule.

    The file holds one node per line as whitespace-separated columns
    ``x [y [z]] w``; blank lines and ``#`` comments are ignored.  The nodes
    are grouped into symmetry orbits (raising NotSymmetric when the set is
    not group invariant) and the resulting rule is certified at the
    declared degree against ``tolerance`` (default: the ambient solver
    tolerance).  Published tables carry far fewer digits than the working
    precision, so pass a tolerance matching the source's accuracy.
    """
    dom = dm.domain(kind)
    points, weights = [], []
    text = Path(path).read_text()
    for lineno, tokens in _significant_lines(text):
        if len(tokens) != dom.dim + 1:
            raise RuleParseError(
                "%s nodes need %d coordinates and a weight, line has %d "
                "values" % (kind, dom.dim, len(tokens)),
                lineno,
            )
        points.append(tuple(_number(t, lineno, "coordinate")
                            for t in tokens[:-1]))
        weights.append(_number(tokens[-1], lineno, "weight"))
    if not points:
        raise RuleParseError("no nodes found", 1)
    rule = dm.compress_nodes(points, weights, dom, degree=degree)
    certify(rule, tolerance=tolerance)
    return rule


def _sha256(data):
    return hashlib.sha256(data).hexdigest()


@contextmanager
def _manifest_lock(root, timeout=10.0):
    """Exclusive advisory lock serializing catalog writers."""
    lock_path = root / "manifest.lock"
    deadline = time.monotonic() + timeout
    while True:
        try:
            fd = os.open(str(lock_path),
                         os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            break
        except FileExistsError:
            if time.monotonic() >= deadline:
                raise SymquadError(
                    "catalog %s is locked (%s exists)" % (root, lock_path)
                )
            time.sleep(0.02)
    try:
        yield
    finally:
        os.close(fd)
        os.unlink(str(lock_path))


def _atomic_write(path, data):
    fd, tmp = tempfile.mkstemp(dir=str(path.parent),
                               prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, str(path))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Catalog:
    """One best rule per (domain, degree) under a directory root.

    Layout: ``<root>/<domain>/q<degree>.rule`` plus ``manifest.json``
    recording a sha256 checksum, degree, and node count per file.  The
    manifest is the catalog's source of truth; checksums are verified on
    load, and writers hold an exclusive lock while updating it.
    """

    def __init__(self, root):
        self.root = Path(root)

    def rule_path(self, kind, degree):
        return self.root / kind / ("q%d.rule" % int(degree))

    def _manifest_path(self):
        return self.root / "manifest.json"

    def _read_manifest(self):
        path = self._manifest_path()
        if not path.exists():
            return {"version": FORMAT_VERSION, "files": {}}
        try:
            manifest = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise RuleParseError("manifest %s: %s" % (path, exc))
        if manifest.get("version") != FORMAT_VERSION:
            raise VersionError(
                "unsupported catalog manifest version %r"
                % manifest.get("version")
            )
        return manifest

    def _write_manifest(self, manifest):
        data = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        _atomic_write(self._manifest_path(), data)

    def entries(self, kind=None):
        """Manifest entries, optionally restricted to one domain."""
        files = self._read_manifest()["files"]
        out = {}
        for rel, entry in files.items():
            if kind is None or entry["domain"] == kind:
                out[rel] = entry
        return out

    def degrees(self, kind):
        """Sorted degrees available for a domain."""
        return sorted(e["degree"] for e in self.entries(kind).values())

    def has(self, kind, degree):
        return int(degree) in self.degrees(kind)

    def node_count(self, kind, degree):
        """Stored node count, or None when the degree is absent."""
        for e in self.entries(kind).values():
            if e["degree"] == int(degree):
                return e["nodes"]
        return None

    def load(self, kind, degree):
        """Read, checksum, and re-certify the stored rule."""
        path = self.rule_path(kind, degree)
        if not path.exists():
            raise MissingData(
                "catalog %s has no %s rule of degree %d"
                % (self.root, kind, degree)
            )
        data = path.read_bytes()
        rel = "%s/q%d.rule" % (kind, int(degree))
        entry = self._read_manifest()["files"].get(rel)
        if entry is not None and entry["sha256"] != _sha256(data):
            raise CertificationFailure(
                "catalog file %s does not match its manifest checksum" % path
            )
        rule = loads_rule(data.decode())
        if rule.domain.kind != kind or rule.degree != int(degree):
            raise RuleParseError(
                "catalog file %s declares %s degree %d"
                % (path, rule.domain.kind, rule.degree)
            )
        return rule

    def store(self, rule, expanded=True, tolerance=None):
        """Insert a certified rule; keep whichever rule has fewer nodes.

        Returns True when the rule was written, False when the catalog
        already holds a rule of the same domain and degree with at most as
        many nodes.  Certification runs before the lock is taken.
        """
        certify(rule, tolerance=tolerance)
        text = dumps_rule(rule, expanded=expanded)
        kind = rule.domain.kind
        rel = "%s/q%d.rule" % (kind, rule.degree)
        path = self.rule_path(kind, rule.degree)
        self.root.mkdir(parents=True, exist_ok=True)
        with _manifest_lock(self.root):
            manifest = self._read_manifest()
            entry = manifest["files"].get(rel)
            intact = (entry is not None and path.exists()
                      and entry["sha256"] == _sha256(path.read_bytes()))
            if intact and entry["nodes"] <= rule.node_count:
                return False
            path.parent.mkdir(parents=True, exist_ok=True)
            _atomic_write(path, text)
            manifest["files"][rel] = {
                "domain": kind,
                "degree": rule.degree,
                "nodes": rule.node_count,
                "sha256": _sha256(text.encode()),
            }
            self._write_manifest(manifest)
            return True


def packaged_catalog():
    """Catalog over the rule files shipped inside the package."""
    return Catalog(Path(__file__).resolve().parent / "data")


def _best_entry(catalogs, kind, degree):
    """Stored rule of exactly this degree with the fewest nodes across
    catalogs, earlier catalogs winning ties.  Returns (nodes, catalog) or
    None.

    The lookup is exact-degree on purpose: ingredient constructions (a
    prism from a triangle rule, a pyramid from square and simplex rules)
    and reference node counts are defined in terms of the degree-q
    ingredient, and substituting a higher degree would both inflate the
    construction and make results depend on unrelated catalog contents.
    """
    best = None
    for i, cat in enumerate(catalogs):
        for e in cat.entries(kind).values():
            if e["degree"] != degree:
                continue
            key = (e["nodes"], i)
            if best is None or key < best[0]:
                best = (key, cat)
    if best is None:
        return None
    (nodes, _i), cat = best
    return nodes, cat


def default_aux(catalog=None):
    """Auxiliary-rule resolver over a user catalog plus the packaged data.

    Returns a callable (kind, degree) -> rule or None suitable for the
    rule builder: the stored rule of exactly that degree with the fewest
    nodes, or None so the builder generates the ingredient itself."""
    catalogs = [c for c in (catalog, packaged_catalog()) if c is not None]

    def aux(kind, degree):
        hit = _best_entry(catalogs, kind, int(degree))
        if hit is None:
            return None
        _nodes, cat = hit
        return cat.load(kind, int(degree))

    return aux


def default_aux_counts(catalog=None):
    """Node-count resolver for reference-construction sizes.

    Returns a callable (kind, degree) -> int or None giving the node count
    of the best stored rule of exactly that degree."""
    catalogs = [c for c in (catalog, packaged_catalog()) if c is not None]

    def counts(kind, degree):
        hit = _best_entry(catalogs, kind, int(degree))
        return None if hit is None else hit[0]

    return counts
