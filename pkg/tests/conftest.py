"""Shared fixtures: a 113-bit ambient precision for every test and a
session-wide cache of generated rules so expensive builds run once."""

import pytest

from symquad import domains as dm
from symquad.build import generate_rule
from symquad.precision import FAST_PRECISION, working_precision
from symquad.ruleio import packaged_catalog

_RULE_CACHE = {}


@pytest.fixture(autouse=True)
def fast_precision():
    """Run every test at the fast working precision unless it rescopes."""
    with working_precision(FAST_PRECISION):
        yield


@pytest.fixture(scope="session")
def built():
    """Memoized rule generation: built(kind, degree) -> (rule, trace).

    Prefers rules shipped with the package (built by this same pipeline)
    and falls back to generating in-process, so the suite stays fast when
    the packaged catalog is present and still self-contained when not.
    """

    def build(kind, degree, generate=False):
        key = (kind, int(degree))
        if key not in _RULE_CACHE:
            with working_precision(FAST_PRECISION):
                if not generate:
                    cat = packaged_catalog()
                    if cat.has(kind, degree):
                        _RULE_CACHE[key] = (cat.load(kind, degree), None)
                        return _RULE_CACHE[key]
                _RULE_CACHE[key] = generate_rule(kind, degree)
        return _RULE_CACHE[key]

    return build


def random_orbit(rng, sclass, max_tries=50):
    """A random valid orbit of the class, rejection-sampling parameters
    that land on degenerate loci."""
    for _ in range(max_tries):
        params = tuple(0.05 + 0.9 * rng.random()
                       for _ in range(sclass.nparams))
        weight = 0.1 + rng.random()
        try:
            return dm.make_orbit(sclass, params, weight)
        except dm.DegenerateOrbit:
            continue
    raise AssertionError("could not sample a valid %s orbit" % sclass.sid)
