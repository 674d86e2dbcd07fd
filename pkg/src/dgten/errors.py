"""Exception types shared across the package."""


class DgtenError(Exception):
    """Base class for all package errors."""


class ParseError(DgtenError):
    """A raw input file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(DgtenError):
    """An input value violates a documented precondition."""


class ConfigError(DgtenError):
    """A configuration value is out of its legal range."""


class IntegrationError(DgtenError):
    """ODE integration produced a non-finite state."""


class TrainingError(DgtenError):
    """Training diverged (non-finite loss)."""

    def __init__(self, message: str, epoch: int | None = None):
        self.epoch = epoch
        super().__init__(message)


class NodeLookupError(DgtenError):
    """A node id is outside the global index."""


class UndefinedMetricError(DgtenError):
    """The requested metric is undefined for the given inputs."""
