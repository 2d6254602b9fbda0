"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Input outside the domain an operation accepts."""


class OutOfRangeError(InvalidInputError):
    """Argument at or beyond the image of a transformation.

    The offending endpoint is kept in ``boundary``.
    """

    def __init__(self, message, boundary):
        super().__init__(message)
        self.boundary = boundary


class EstimationError(RuntimeError):
    """The transformation parameter could not be estimated."""


class BootstrapDegeneracyError(RuntimeError):
    """A bootstrap replication could not be completed."""


class StudyAborted(RuntimeError):
    """Too many Monte Carlo replications failed."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
