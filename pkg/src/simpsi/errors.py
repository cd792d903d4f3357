"""Exception hierarchy shared across the package."""


class SimpsiError(Exception):
    """Base class for all package errors."""


class ShapeError(SimpsiError, ValueError):
    """Operands have incompatible shapes."""


class NonFiniteError(SimpsiError, FloatingPointError):
    """A NaN or Inf appeared where only finite values are allowed."""


class ConfigError(SimpsiError, ValueError):
    """Invalid configuration; ``key`` names the offending field when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class TapeError(SimpsiError, RuntimeError):
    """Misuse of the autodiff tape (e.g. a second backward pass)."""


class DatasetError(SimpsiError):
    """Base class for dataset persistence errors."""


class ManifestError(DatasetError):
    """Missing or malformed manifest field."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class VersionMismatchError(DatasetError):
    pass


class TruncatedFileError(DatasetError):
    pass


class ShapeInconsistencyError(DatasetError):
    pass


class CheckpointError(SimpsiError):
    """Base class for checkpoint errors."""


class CheckpointFormatError(CheckpointError):
    """Bad magic bytes or unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointMismatchError(CheckpointError):
    """Checkpoint registry disagrees with the model built from its config."""

    def __init__(self, message: str, parameter: str | None = None):
        super().__init__(message)
        self.parameter = parameter


class NumericalAbortError(NonFiniteError):
    """Training hit a NaN/Inf; ``diagnostics`` records where."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FreezeViolationError(SimpsiError, AssertionError):
    """A frozen model's parameters or statistics changed during a step."""
