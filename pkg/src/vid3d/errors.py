"""Exception types shared across the package."""


class Vid3dError(Exception):
    pass


class ShapeError(Vid3dError, ValueError):
    """Tensor extents do not satisfy an operation's contract."""


class FormatError(Vid3dError, ValueError):
    """A binary file has a bad magic, version, or is truncated."""


class ConfigError(Vid3dError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class DataError(Vid3dError, ValueError):
    """Dataset content violates a precondition (e.g. video too short)."""
