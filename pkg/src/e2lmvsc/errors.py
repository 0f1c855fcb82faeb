"""Exception types raised across the package."""


class E2LMVSCError(Exception):
    """Base class for every error raised by this package."""


class InputError(E2LMVSCError, ValueError):
    """Bad user input (CLI exit code 2)."""


class NumericalError(E2LMVSCError, ArithmeticError):
    """Numerical failure (CLI exit code 3)."""


class ShapeMismatch(InputError):
    pass


class LengthMismatch(InputError):
    pass


class BadLabel(InputError):
    pass


class MissingFile(InputError, FileNotFoundError):
    pass


class IoError(InputError, OSError):
    pass


class AsymmetricInput(InputError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class NonFiniteGradient(NumericalError):
    pass


class NonFiniteLoss(NumericalError):
    def __init__(self, message, epoch=None, checkpoint=None):
        super().__init__(message)
        self.epoch = epoch
        self.checkpoint = checkpoint
