"""Moment-matrix steering detection for bipartite quantum states.

The package turns an operator string set, an observability policy, and a
data source into a constrained moment matrix, decides positive-semidefinite
completability with a semidefinite program, extracts optimal linear steering
witnesses from the dual, and cross-checks against closed-form criteria.
"""

__version__ = "0.1.0"

from .errors import BracketingError, ConfigurationError, NumericalTroubleError

__all__ = [
    "BracketingError",
    "ConfigurationError",
    "NumericalTroubleError",
    "__version__",
]
