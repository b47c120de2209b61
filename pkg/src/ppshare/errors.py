"""Exception types shared across the package.

ValidationError maps to CLI exit code 1, NumericalError to exit code 2.
"""


class ValidationError(ValueError):
    """Invalid input data, geometry, or configuration."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (factorization, divergence, separation)."""
