"""
Exception types raised across the package.

All of them derive from ValueError so callers validating inputs can catch
them the same way they catch pydantic validation failures.
"""


class NumericError(ValueError):
    """Non-finite values, empty inputs or degenerate norms."""


class ShapeError(ValueError):
    """Array shapes that do not line up."""


class LabelError(ValueError):
    """Class labels outside the configured range."""


class MarginError(ValueError):
    """Angle-function margins outside their validity regime."""


class CheckpointError(ValueError):
    """Unreadable, truncated or mismatched checkpoint files."""


class CorpusFormatError(ValueError):
    """Corrupt or truncated corpus files."""


class TrialError(ValueError):
    """Trial lists that cannot be built or scored."""


class ConfigError(ValueError):
    """Experiment configuration problems found outside pydantic validation."""
