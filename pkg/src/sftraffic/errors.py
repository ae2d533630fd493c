class ConfigError(ValueError):
    """Invalid parameters for graph generation, simulation or a sweep."""


class GraphFormatError(ValueError):
    """Malformed edge-list input."""


class UnreachableError(ValueError):
    """Raised when routing needs a path between disconnected nodes."""


class RangeError(ValueError):
    """The searched R range does not bracket the congestion transition."""


class ValidityError(ValueError):
    """Input does not satisfy the regime a measurement assumes."""
