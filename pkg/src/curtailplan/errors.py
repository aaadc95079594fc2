"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: validation errors -> 1,
I/O errors -> 2, numerical failures -> 3.
"""


class CurtailPlanError(Exception):
    """Base class for all package errors."""


class ValidationError(CurtailPlanError):
    """Input data or configuration violates a documented invariant."""


class FormatError(ValidationError):
    """A file or record stream is structurally malformed."""


class GapError(FormatError):
    """A quarter-hour record is missing from the 15-minute grid."""


class BoundsError(CurtailPlanError):
    """A state update left its admissible range.

    Carries the overshoot magnitude so callers (and tests) can inspect
    how far out of range the update landed.
    """

    def __init__(self, message, overshoot=0.0):
        super().__init__(message)
        self.overshoot = overshoot


class NumericalError(CurtailPlanError):
    """A numerical routine produced non-finite or otherwise unusable results."""
