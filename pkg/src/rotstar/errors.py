"""Exception types shared across rotstar modules."""


class RotstarError(Exception):
    """Base class for all rotstar errors."""


class GridMismatchError(RotstarError):
    """Field algebra or an operator combined fields on different grids."""


class DomainError(RotstarError, ValueError):
    """An input value lies outside the mathematical domain of an operation."""


class SupportViolationError(RotstarError):
    """A density's support touches the outer grid layers, so the free-space
    potential would be corrupted by truncation."""


class HypothesisViolationError(RotstarError):
    """A stated hypothesis of the underlying theorem fails for the input."""


class RadiusNotFoundError(RotstarError):
    """Radial shooting never crossed zero inside the search range."""


class ConvergenceError(RotstarError):
    """An iterative solve stagnated or exceeded its iteration budget."""


class ShiftTooSmallError(ConvergenceError):
    """Monotone iteration lost monotonicity; retry with a larger shift."""

    def __init__(self, message, suggested_shift=None):
        super().__init__(message)
        self.suggested_shift = suggested_shift


class NotSphericalError(RotstarError):
    """A field assumed spherical deviates too much from spherical symmetry."""


class NoZeroCrossingError(RotstarError):
    """A Lane-Emden integration never reached zero (n >= 5 regime)."""


class DegenerateConstraintError(RotstarError):
    """The constraint functional vanished where a positive value is required."""


class DegenerateSolutionError(RotstarError):
    """A solution field has an empty positive set."""
