"""Exception hierarchy shared across the package.

Every error raised on purpose derives from IsingInferError so callers can
catch package failures without swallowing programming errors. The CLI maps
ConfigError to exit code 2 and NumericError to exit code 3.
"""


class IsingInferError(Exception):
    """Base class for all package-level errors."""


class ParameterError(IsingInferError, ValueError):
    """An argument violates a documented precondition."""


class CapacityError(ParameterError):
    """A size cap was exceeded (enumeration width, partition-sum length)."""


class ConstructionError(IsingInferError, RuntimeError):
    """A randomized builder exhausted its retry budget."""


class ConfigError(IsingInferError, ValueError):
    """An experiment configuration file is malformed or inconsistent."""


class NumericError(IsingInferError, RuntimeError):
    """A numeric routine failed to reach its documented tolerance."""
