"""Exception types shared across the workbench."""


class ConfigurationError(ValueError):
    """Invalid configuration: bad geometry, unknown material, broken invariant."""


class S2TFormatError(IOError):
    """Malformed or truncated S2T tensor file."""

    def __init__(self, path, reason):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{path}: {reason}")
