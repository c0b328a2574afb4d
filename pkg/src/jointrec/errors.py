"""Exception types shared across the package."""


class JointrecError(Exception):
    """Base class for library errors."""


class DataError(JointrecError):
    """A file or buffer does not conform to an expected format."""


class ConfigError(DataError):
    """An experiment configuration is invalid."""


class ExternalCodecError(JointrecError):
    """An external codec process failed; carries command context."""

    def __init__(self, message: str, command: str = "", stderr: str = ""):
        super().__init__(message)
        self.command = command
        self.stderr = stderr
