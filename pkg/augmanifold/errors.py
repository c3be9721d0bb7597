"""
Exception hierarchy and CLI exit codes.

Every failure raised by the package derives from AugmanifoldError so that the
CLI can map it to a documented exit code.
"""


class AugmanifoldError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(AugmanifoldError, ValueError):
    """Invalid parameters, sizes or configuration files."""

    exit_code = 2


class DomainError(AugmanifoldError, ValueError):
    """A value lies outside the domain an operation accepts."""

    exit_code = 2


class ParseError(AugmanifoldError):
    """Malformed binary input (IDX or package file formats)."""

    exit_code = 3

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class DataError(AugmanifoldError):
    """Input data that cannot be processed, e.g. non-finite coordinates."""

    exit_code = 4


class NumericalError(AugmanifoldError):
    """A numerical routine met a degenerate or non-finite quantity."""

    exit_code = 4


class ExtensionError(NumericalError):
    """Nyström extension is unstable for one embedding component."""

    def __init__(self, message: str, component: int):
        self.component = component
        super().__init__(f"{message} (component {component})")


class TrainingError(AugmanifoldError):
    """Encoder training diverged."""

    exit_code = 5

    def __init__(self, message: str, epoch: int):
        self.epoch = epoch
        super().__init__(f"{message} (epoch {epoch})")
