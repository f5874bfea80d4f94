"""Exception types raised across the package."""


class DomainError(ValueError):
    """Input outside the domain of an operation (bad index, shape, sign...)."""


class InfeasibleError(RuntimeError):
    """A selection or optimization problem admits no feasible point."""


class NumericalError(RuntimeError):
    """A numerical routine failed or produced an unusable result."""


class ConfigError(ValueError):
    """Schema or value violation in a configuration file.

    The message starts with the dotted field path.
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class StageError(RuntimeError):
    """Failure inside a named pipeline stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
