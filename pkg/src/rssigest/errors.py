class RssiGestError(Exception):
    """Base class for all package errors."""


class DomainError(RssiGestError, ValueError):
    """Input outside the mathematical domain of an operation."""


class TraceFormatError(RssiGestError, ValueError):
    """A trace file violates the CSV format or sampling rules."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyInputError(TraceFormatError):
    """A trace file holds no samples."""


class ConfigError(RssiGestError, ValueError):
    """Template, rule, or scenario configuration is invalid."""


class StageError(RssiGestError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
