"""Exception types shared across the package.

Each error class carries the CLI exit code it maps to.
"""


class ByzSPRTError(Exception):
    exit_code = 1


class ConfigError(ByzSPRTError, ValueError):
    """Invalid experiment or detector configuration."""

    exit_code = 2


class ModelDegeneracyError(ByzSPRTError, ValueError):
    """The hypothesis pair violates absolute continuity or has a zero divergence."""

    exit_code = 2


class NumericalSearchError(ByzSPRTError, RuntimeError):
    exit_code = 3


class EstimationError(ByzSPRTError, RuntimeError):
    """No usable trials (e.g. every trial truncated)."""

    exit_code = 3


class AdmissibilityError(ByzSPRTError, RuntimeError):
    """An attack emitted a bias outside its declared compromised set."""

    exit_code = 3


class CapacityError(ByzSPRTError, RuntimeError):
    """Exact computation would exceed the configured state-space cap."""

    exit_code = 4
