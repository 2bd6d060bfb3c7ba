"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: validation problems exit with 2,
degenerate numerical situations (empty retained spectrum, exhausted
degrees of freedom, zero normalizer) with 3.
"""


class FunregError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(FunregError):
    """Bad user input: shapes, ranges, malformed files or configs."""


class GridMismatchError(ValidationError):
    """Two curves (or a curve and a fit) do not live on the same grid."""


class DegenerateFitError(FunregError):
    """The requested computation is mathematically degenerate.

    Raised when the threshold removes every eigenvalue, when degrees of
    freedom are exhausted (n <= d_n), or when a fixed predictor is
    orthogonal to the retained eigenspace (zero normalizer).
    """
