"""Exception types shared across the package."""


class R2seError(Exception):
    """Base class for all package errors."""


class ShapeError(R2seError, ValueError):
    pass


class NumericError(R2seError, ArithmeticError):
    pass


class ConfigError(R2seError, ValueError):
    pass


class InputError(R2seError, ValueError):
    pass


class InfeasibleSpecError(R2seError, RuntimeError):
    pass


class TrainingError(R2seError, RuntimeError):
    pass


class IntegrityError(R2seError, RuntimeError):
    pass


class FitError(R2seError, RuntimeError):
    pass


class DomainError(R2seError, ValueError):
    pass
