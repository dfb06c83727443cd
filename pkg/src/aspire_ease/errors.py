"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid argument values or mismatched shapes."""


class ParseError(InputError):
    """Malformed external data (CSV rows, config files)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(InputError):
    """Invalid or unknown experiment configuration keys/values."""


class ProtocolError(RuntimeError):
    """Engine invoked in a state the protocol forbids."""


class CapacityError(RuntimeError):
    """Cutting-plane set is at its configured maximum size."""
