class InvalidParameter(ValueError):
    """Raised when an argument falls outside an operation's domain."""


class ConfigError(ValueError):
    """Configuration file or override failed validation.

    ``field`` names the offending key so callers can point at it.
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
