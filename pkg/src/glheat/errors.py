"""Exception types shared across the package."""


class GLHeatError(Exception):
    """Base class for package errors."""


class ConfigError(GLHeatError):
    """Invalid configuration, file format, or CLI input (exit code 1)."""


class NumericsError(GLHeatError):
    """Numerical failure during a run: blow-up, factorization breakdown,
    degenerate probe (exit code 2)."""


class ContainmentError(GLHeatError, ValueError):
    """A space-time probe violates its containment hypothesis."""
