"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed, inconsistent, or missing input data."""


class ConfigError(ValueError):
    """Configuration value outside its documented range."""


class SolverError(RuntimeError):
    """LP solve failed or returned an unusable status."""
