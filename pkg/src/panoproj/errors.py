"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data or configuration is malformed or out of its domain."""


class NumericError(ArithmeticError):
    """A numeric stage produced a non-finite or inadmissible result."""


class FrustumError(NumericError, ValueError):
    """A direction or plane point lies outside the valid projection frustum."""
