class CpcSSLError(Exception):
    """Base exception for cpcssl errors."""

    code = "E_INTERNAL"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def one_line(self) -> str:
        """Machine-parsable single-line form used by the CLI."""
        text = " ".join(self.message.split())
        return f"error={self.code} {text}"


class ShapeError(CpcSSLError, ValueError):
    """Raised when tensor shapes do not line up."""

    code = "E_SHAPE"


class ConfigError(CpcSSLError):
    """Raised when an experiment config key is unknown, mistyped or out of range."""

    code = "E_CONFIG"

    def __init__(self, message: str, key: str = "", line: int = 0):
        if key:
            message = f"{key} (line {line}): {message}"
        super().__init__(message)
        self.key = key
        self.line = line


class DataError(CpcSSLError):
    """Raised when input data is malformed or too small for the requested task."""

    code = "E_DATA"


class NonFiniteLossError(CpcSSLError):
    """Raised when a loss term stops being finite."""

    code = "E_NONFINITE"

    def __init__(self, term: str, value: float, step: int):
        super().__init__(f"loss term '{term}' is {value} at step {step}")
        self.term = term
        self.value = value
        self.step = step


class CheckpointError(CpcSSLError):
    """Raised when a checkpoint cannot be written or read."""

    code = "E_CHECKPOINT"


class ChecksumError(CheckpointError):
    """Raised when a checkpoint fails its CRC32 check."""

    code = "E_CHECKSUM"


class IncompatibleCheckpointError(CheckpointError):
    """Raised when a checkpoint does not match the model it is loaded into."""

    code = "E_INCOMPATIBLE"


class VerificationError(CpcSSLError):
    """Raised when a verify suite reports a failed check."""

    code = "E_VERIFY"
