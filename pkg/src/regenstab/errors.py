class RegenStabError(Exception):
    """Base class for errors raised by regenstab."""


class DimensionError(RegenStabError, ValueError):
    """Shapes are inconsistent or a lifted dimension is too large."""


class ModelViolation(RegenStabError):
    """A sampled cycle broke the model's declared guarantees (e.g. R > R_max)."""


class AssumptionError(RegenStabError):
    """A stability theorem hypothesis fails and was not asserted by the caller."""


class ConfigError(RegenStabError):
    """Run configuration failed schema or invariant validation."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
