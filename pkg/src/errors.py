"""
Domain exceptions.

Everything a caller can fix (bad input, bad config, incompatible curves) is a
``ValueError`` so the CLI can map it to the usage exit code.
"""


class CurveError(ValueError):
    """Invalid curve contents or an operation on incompatible curves."""


class ShapeMismatchError(CurveError):
    """Curves compared by a metric do not share length and interval_len."""


class CurveParseError(CurveError):
    """Malformed curve file; carries the offending line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class UnstableQueueError(ValueError):
    """Queue utilization is not below 1."""


class PlanError(ValueError):
    """Experiment plan cannot be expanded."""


class PlacementError(ValueError):
    """World initialization cannot place the requested objects."""
