"""Exception types shared across the package.

``ValueError`` is reserved for bad arguments (wrong shapes, out-of-range
options); the classes here mark failures of the data itself or of the
numerics, which callers may want to handle differently.
"""


class EnsographError(Exception):
    """Base class for package-specific failures."""


class ValidationError(EnsographError):
    """A data file or in-memory dataset violates its contract."""


class NumericalError(EnsographError):
    """A computation produced NaN or Inf where finite values are required."""
