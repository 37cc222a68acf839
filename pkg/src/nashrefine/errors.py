class DimensionError(ValueError):
    """Shapes of a game and a strategy profile disagree."""


class DomainError(ValueError):
    """A point lies outside the interior of the simplex where it must not."""


class GameTooLargeError(ValueError):
    """Normal-form conversion would exceed the configured entry cap."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
