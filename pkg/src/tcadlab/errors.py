"""Exception types shared across the package."""


class OutOfDomainError(ValueError):
    """A query point or parameter lies outside the supported domain."""


class NumericFailure(RuntimeError):
    """A numeric routine produced NaN/Inf or a linear solve failed."""


class ExtractionFailure(RuntimeError):
    """A derived quantity (e.g. threshold voltage) could not be extracted."""
