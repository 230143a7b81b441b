"""Exception hierarchy.

Every error carries a short ``category`` slug; the CLI prints it as
``error: <category>: <detail>``.
"""


class ElaSpoofError(Exception):
    category = "error"


class InvalidShapeError(ElaSpoofError, ValueError):
    category = "invalid-shape"


class ShapeMismatchError(ElaSpoofError, ValueError):
    category = "shape-mismatch"


class InvalidArgumentError(ElaSpoofError, ValueError):
    category = "invalid-argument"


class InvalidConfigError(ElaSpoofError, ValueError):
    category = "invalid-config"


class IllegalStateError(ElaSpoofError, RuntimeError):
    category = "illegal-state"


class NumericError(ElaSpoofError, ArithmeticError):
    category = "numeric"


class InvalidLabelError(ElaSpoofError, ValueError):
    category = "invalid-label"


class CorruptCheckpointError(ElaSpoofError):
    category = "corrupt-checkpoint"


class UnsupportedVersionError(CorruptCheckpointError):
    category = "unsupported-version"


class DecodeError(ElaSpoofError):
    category = "decode"

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = path


class ProcessingError(ElaSpoofError):
    category = "processing"


class ManifestError(ElaSpoofError, ValueError):
    category = "manifest"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InvalidDatasetError(ElaSpoofError, ValueError):
    category = "invalid-dataset"
