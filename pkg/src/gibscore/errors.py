"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: problems with the inputs themselves
(bad flags, malformed manifests, invariant violations) exit 1, failures
while processing otherwise-valid data (corrupt files, divergence, missing
upstream artifacts) exit 2.
"""


class GibscoreError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(GibscoreError):
    """File does not carry the expected magic bytes or format version."""


class CorruptionError(GibscoreError):
    """File is structurally damaged: truncated payload or trailing bytes."""


class ValidationError(GibscoreError):
    """Data violates a documented invariant (token range, NaN values, ...)."""


class InsufficientDataError(GibscoreError):
    """Not enough data to run the requested computation."""


class DivergenceError(GibscoreError):
    """Training produced a non-finite loss or parameter."""


class StageDependencyError(GibscoreError):
    """A pipeline stage is missing an artifact a previous stage produces."""


class UndefinedStatisticError(GibscoreError):
    """The requested statistic is undefined for this data (zero variance)."""
