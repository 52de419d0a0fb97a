"""Exception hierarchy shared across the package."""


class SsntError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SsntError):
    """Invalid configuration: bad dimensions, unknown keys, incompatible models."""


class InputError(SsntError):
    """Invalid data fed to an operation (empty sequence, malformed file, ...)."""


class UsageError(SsntError):
    """API misuse: wrong call order, out-of-range index, wrong model kind."""


class BudgetError(SsntError):
    """A lattice exceeded the configured size budget."""


class InternalError(SsntError):
    """Invariant violation inside the package (stale caches and the like)."""


class CheckpointError(SsntError):
    """Corrupt or incompatible checkpoint file."""


class TrainingDiverged(SsntError):
    """Training produced a non-finite loss or gradient."""
