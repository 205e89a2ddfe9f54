"""Exception types shared across the package."""


class ModelError(ValueError):
    """A model definition is structurally unusable (e.g. indefinite noise covariance)."""


class ObservabilityError(ValueError):
    """The pooled observation Grammian is singular."""


class StabilityError(ValueError):
    """An innovation gain is too small for the asymptotic covariance to exist."""


class NumericalError(RuntimeError):
    """A dense eigensolver or matrix solve failed to converge."""


class InsufficientDataError(ValueError):
    """Not enough usable points for a fit."""


class ConfigError(ValueError):
    """An experiment configuration file is malformed or inconsistent."""
