"""Exception types shared across the pipeline.

Each maps to a CLI exit code: config problems exit 2, input problems exit 3,
internal invariant violations exit 4.
"""


class VidsalError(Exception):
    """Base class for all pipeline errors."""


class InvalidArgument(VidsalError):
    """A call was made with arguments violating an operation's preconditions."""


class MalformedInput(VidsalError):
    """An on-disk artifact does not follow its declared format."""


class MissingFeature(VidsalError):
    """A required feature record is absent from the feature store."""


class InvalidGraph(VidsalError):
    """A smoothness graph contains non-finite or otherwise invalid data."""


class ConfigError(VidsalError):
    """The configuration file or overrides are invalid."""
