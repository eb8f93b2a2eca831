"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid run configuration or model parameters."""


class NumericalError(RuntimeError):
    """A numerical operation failed (singular matrix, non-SPD covariance, ...)."""
