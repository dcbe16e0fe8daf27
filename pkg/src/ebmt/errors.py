"""Exception types raised across the package.

Everything derives from :class:`EbmtError` so callers can catch one base
class at an API boundary.  Errors carry the offending quantities as
attributes rather than burying them in the message string.
"""

from __future__ import annotations


class EbmtError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(EbmtError):
    """Arrays passed together do not agree on a shared dimension."""


class ConstantColumnError(EbmtError):
    """A treatment or covariate column has zero sample variance."""

    def __init__(self, block: str, index: int):
        self.block = block
        self.index = index
        super().__init__(f"{block} column {index} is constant; cannot standardize")


class NonpositiveBaseWeightError(EbmtError):
    """Base weights must be strictly positive."""


class SingularHessianError(EbmtError):
    """Dual Hessian stayed singular after ridge escalation."""


class NotConvergedError(EbmtError):
    """Newton solve hit the iteration cap before meeting tolerance."""

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(gradient sup-norm {residual:.3e})"
        )


class WeightVectorInvalidError(EbmtError):
    """Weight vector has wrong length, nonpositive or non-finite entries."""


class RankDeficientDesignError(EbmtError):
    """Design matrix is rank deficient."""

    def __init__(self, column: int):
        self.column = column
        super().__init__(f"design column {column} is linearly dependent on earlier columns")


class SingularBreadError(EbmtError):
    """Weighted Gram matrix of the design is numerically singular."""


class TooManyFailedResamplesError(EbmtError):
    """Bootstrap abandoned because too many resamples failed to estimate."""

    def __init__(self, failed: int, total: int):
        self.failed = failed
        self.total = total
        super().__init__(f"{failed} of {total} bootstrap resamples failed")


class OutOfRangeError(EbmtError):
    """Evaluation point lies outside the spline's supported range."""

    def __init__(self, value: float, dimension: int, low: float, high: float):
        self.value = value
        self.dimension = dimension
        self.low = low
        self.high = high
        super().__init__(
            f"value {value!r} outside [{low!r}, {high!r}] in dimension {dimension}"
        )


class IllConditionedBasisError(EbmtError):
    """Tensor-product basis too rich for the data (near-empty cells)."""

    def __init__(self, min_singular_value: float):
        self.min_singular_value = min_singular_value
        super().__init__(
            f"basis cross-product nearly singular "
            f"(smallest singular value {min_singular_value:.3e}); reduce the knot count"
        )


class SingularCrossProductError(EbmtError):
    """Covariate cross-product matrix is singular in the balance test."""


class MissingColumnError(EbmtError):
    """A requested column is absent from the CSV header."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"column {name!r} not found in input header")


class ParseError(EbmtError):
    """CSV row is structurally malformed."""

    def __init__(self, line: int, column: int, reason: str = ""):
        self.line = line
        self.column = column
        msg = f"malformed input at line {line}, column {column}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class EmptyAfterFilteringError(EbmtError):
    """No usable rows remain after dropping incomplete ones."""
