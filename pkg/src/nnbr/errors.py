"""Exception types raised across the package."""


class NNBRError(Exception):
    """Base class for all package errors."""


class DomainError(NNBRError, ValueError):
    """A loss was evaluated outside its family's domain."""


class ShapeError(NNBRError, ValueError):
    pass


class RoleError(NNBRError, ValueError):
    """Numerator and denominator samples were passed in swapped positions."""


class ConfigError(NNBRError, ValueError):
    pass


class NumericalError(NNBRError, ArithmeticError):
    """A parameter or risk became non-finite during training."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class SingularMatrixError(NNBRError, ArithmeticError):
    pass


class LabelError(NNBRError, ValueError):
    pass


class UnsupportedFamily(NNBRError, ValueError):
    pass


class QuadratureError(NNBRError, ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass
