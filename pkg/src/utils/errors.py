"""Exception hierarchy for novikov-lab.

Blow-up suspicion is deliberately absent here: it is a run outcome
(see ``dynamics.Termination``), not an error.
"""

from typing import List, Optional


class NovikovError(Exception):
    """Base class for all novikov-lab errors."""
    pass


class NonFiniteFieldError(NovikovError):
    """Raised when a field holds NaN or Inf samples."""

    def __init__(self, what: str = "field"):
        super().__init__(f"non-finite field: {what}")
        self.what = what


class GridMismatchError(NovikovError):
    """Raised when fields that must share a grid do not."""
    pass


class NumericalFailureError(NovikovError):
    """Raised when a tendency or a stepped state turns non-finite."""

    def __init__(self, message: str, component: Optional[int] = None, time: Optional[float] = None):
        detail = message
        if component is not None:
            detail += f" (component {component})"
        if time is not None:
            detail += f" at t={time:.6g}"
        super().__init__(detail)
        self.component = component
        self.time = time


class HistoryRangeError(NovikovError):
    """Raised when a stored history is queried outside its time span."""
    pass


class InsufficientDataError(NovikovError):
    """Raised when a monitor series is shorter than the detection window."""
    pass


class UnderResolvedError(NovikovError):
    """Raised when a mollifier is narrower than the grid can resolve."""
    pass


class SeamCrossingError(NovikovError):
    """Raised when a line-flavor test profile wraps the periodic seam."""
    pass


class ObserverError(NovikovError):
    """Raised when an observer fails during a simulation run."""
    pass


class ConfigError(NovikovError):
    """Raised for invalid scenario configuration; carries every violation."""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations) if self.violations else "invalid configuration")


class ArtifactIOError(NovikovError):
    """Raised when run artifacts cannot be read or written."""
    pass
