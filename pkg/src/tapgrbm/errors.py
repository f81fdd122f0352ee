"""Exception hierarchy shared by all modules."""


class TapError(Exception):
    """Base class for every error raised by this package."""


class InputError(TapError, ValueError):
    """Invalid arguments: bad shapes, out-of-range parameters, non-finite inputs."""


class NumericalError(TapError, ArithmeticError):
    """A computation produced a non-finite value after all stabilizations.

    ``context`` carries whatever the raising site knows about the offending
    inputs (site index, cavity fields, unit parameters).
    """

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context

    def __str__(self):
        base = super().__str__()
        if not self.context:
            return base
        details = ", ".join(f"{k}={v!r}" for k, v in self.context.items())
        return f"{base} ({details})"


class ModelFileError(TapError, IOError):
    """A model file could not be parsed."""


class ModelVersionError(ModelFileError):
    """The model file was written with an unsupported format version."""


class ModelCorruptError(ModelFileError):
    """Checksum mismatch or truncated payload."""


class DataFormatError(TapError, ValueError):
    """A dataset file does not match its declared container format."""
