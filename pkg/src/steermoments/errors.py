"""Shared exception types."""


class ConfigurationError(ValueError):
    """Invalid configuration, schema violation, or ill-posed problem data."""


class NumericalTroubleError(RuntimeError):
    """The solver could not certify a result at the requested tolerance.

    Carries the best bounds found so far in ``best_bounds`` when available.
    """

    def __init__(self, message, best_bounds=None):
        super().__init__(message)
        self.best_bounds = best_bounds


class BracketingError(ValueError):
    """A threshold scan found no sign change inside the requested range."""
