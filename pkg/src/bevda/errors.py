"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericError -> 3.
"""


class BevdaError(Exception):
    """Base class for all package errors."""


class ConfigError(BevdaError):
    """Invalid configuration value, file, or specification."""


class GeometryError(BevdaError):
    """Degenerate camera model (singular preprocessing transform, bad rotation)."""


class ContractViolation(BevdaError):
    """Caller broke an operation precondition (shape mismatch, out-of-range class id)."""


class StateError(BevdaError):
    """Operation invoked on an uninitialized or inconsistent training state."""


class NumericError(BevdaError):
    """Non-finite value encountered where the pipeline requires finite numbers."""
