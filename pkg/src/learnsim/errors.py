"""Exception types raised across the package."""


class LearnSimError(Exception):
    """Base class for all package errors."""


class SchemaError(LearnSimError, ValueError):
    """A parameter schema is malformed or does not match a vector."""


class ValidationError(LearnSimError, ValueError):
    """An input value violates a documented precondition."""


class ConfigError(LearnSimError, ValueError):
    """An experiment config is invalid.

    ``field`` names the offending dotted key when one is known.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class ExperimentError(LearnSimError, RuntimeError):
    """A protocol run failed; ``iteration`` is the loop index at failure."""

    def __init__(self, message: str, iteration: int | None = None):
        prefix = f"iteration {iteration}: " if iteration is not None else ""
        super().__init__(prefix + message)
        self.iteration = iteration
        self.partial = None  # history up to the failing iteration, if any
