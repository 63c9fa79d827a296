"""Exception hierarchy shared across the package."""


class ClusterDiffError(Exception):
    """Base class for errors raised by clusterdiff."""


class DataError(ClusterDiffError, ValueError):
    """Input data or arguments violate a documented precondition."""


class NumericalError(ClusterDiffError, ArithmeticError):
    """A computation could not be carried out reliably in floating point."""


class DegenerateSupportError(NumericalError):
    """Truncation support carries no representable Gaussian mass."""


class TruncationError(NumericalError):
    """The observed statistic fell outside its own truncation set.

    This indicates an inconsistency between the clustering run and the
    constraint generation (usually a tie resolved differently), and is
    never silently corrected.
    """
