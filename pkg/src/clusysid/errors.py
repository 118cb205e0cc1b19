class ConfigurationError(ValueError):
    """Raised for inconsistent dimensions, invalid parameters or malformed configs."""


class DegeneracyError(ArithmeticError):
    """Raised when a matrix that must be well conditioned is (numerically) singular."""
