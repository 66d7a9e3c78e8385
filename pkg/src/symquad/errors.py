"""Exception types shared across the toolkit."""


class SymquadError(Exception):
    """Base class for all toolkit errors."""


class InversionFailure(SymquadError):
    """A damped normal system was numerically rank deficient."""


class ConvergenceFailure(SymquadError):
    """An iterative refinement did not reach its residual target."""


class DegenerateOrbit(SymquadError):
    """Orbit parameters landed on a locus where expanded nodes coincide."""


class NotSymmetric(SymquadError):
    """A node multiset is not invariant under the domain symmetry group."""


class NoProjection(SymquadError):
    """A point admits no projection onto the requested symmetry locus."""


class ZeroStep(SymquadError):
    """A projected step was scaled down to nothing at a feasibility wall."""


class SolveFailed(SymquadError):
    """A moment solve that was required to succeed did not converge."""


class MissingData(SymquadError):
    """A required lower-dimensional input rule is not available."""


class PrecisionFloor(SymquadError):
    """Too few measurements sit above the roundoff floor to fit a rate."""


class CertificationFailure(SymquadError):
    """A rule failed re-verification of its stated properties."""


class RuleParseError(SymquadError):
    """A rule file is malformed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class VersionError(SymquadError):
    """A rule file declares an unsupported format version."""


# Process exit codes used by the command line front end.
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_CERTIFICATION = 3
EXIT_SOLVE = 4
EXIT_MISSING = 5
