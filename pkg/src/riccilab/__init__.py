"""Numerical laboratory for Ricci flow.

Subpackages cover homogeneous 3-D geometries (Milnor frames), the flow
integrator, normalized surface flow, maximum-principle and eigenvalue
tools, principal-symbol algebra, and Kahler potential flow on complex
tori, plus a CLI front end.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateCovectorError,
    DegenerateMetricError,
    InapplicableError,
    InconsistentStateError,
    InvalidInputError,
    NumericalFailureError,
    RicciLabError,
)

__all__ = [
    "DegenerateCovectorError",
    "DegenerateMetricError",
    "InapplicableError",
    "InconsistentStateError",
    "InvalidInputError",
    "NumericalFailureError",
    "RicciLabError",
    "__version__",
]
