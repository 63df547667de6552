"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when a model, environment or experiment configuration is inconsistent."""


class StabilityError(RuntimeError):
    """Raised when an explicit time step violates the stability bound or the solution blows up."""
