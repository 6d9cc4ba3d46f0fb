"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ConfigError/DataError -> 1,
InvariantError -> 2.
"""


class GatDstError(Exception):
    """Base class for all package errors."""


class DimensionError(GatDstError):
    """Shape mismatch between operands; message names both shapes."""


class ConfigError(GatDstError):
    """Invalid or inconsistent configuration."""


class DataError(GatDstError):
    """Malformed ontology, corpus, checkpoint, or prediction-dump input."""


class InvariantError(GatDstError):
    """Internal contract violated; indicates a bug, not bad input."""
