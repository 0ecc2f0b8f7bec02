"""Exception hierarchy shared across the package."""


class PolexError(Exception):
    """Base class for all package errors."""


class ConfigError(PolexError):
    """Invalid configuration: bad spec fields, dimension mismatches, unparsable config files."""


class NumericsError(PolexError):
    """Numerical failure during simulation or quadrature (non-finite values, blow-up)."""


class NotPSDError(NumericsError):
    """Matrix handed to the PSD square root is not positive semidefinite."""


class UnsupportedOperation(PolexError):
    """Operation requires an optional component (e.g. a score function) that is absent."""
