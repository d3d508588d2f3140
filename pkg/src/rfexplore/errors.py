"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes do not agree with the MDP they are used with."""


class ParameterError(ValueError):
    """A constructor or routine received an out-of-range parameter."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or references unknown names."""
