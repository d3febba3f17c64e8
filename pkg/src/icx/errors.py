"""Exception hierarchy.

``ValidationError`` maps to CLI exit code 1, ``NumericalGuardError`` (and its
subclasses) to exit code 2.
"""


class ICXError(Exception):
    """Base class for toolkit errors."""


class ValidationError(ICXError, ValueError):
    pass


class NumericalGuardError(ICXError):
    pass


class SizeLimitError(NumericalGuardError):
    pass


class CostGuardError(NumericalGuardError):
    pass


class JammedError(NumericalGuardError):
    pass


class InadmissibleError(NumericalGuardError):
    pass


class DegenerateDensityError(ValidationError):
    pass


class UnsupportedFamilyError(ValidationError):
    pass


class FitUndeterminedError(NumericalGuardError):
    pass
