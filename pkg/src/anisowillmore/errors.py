"""Exception types shared across the package."""


class WillmoreError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(WillmoreError, ValueError):
    """Non-finite or misaligned input."""


class InvalidConfigError(WillmoreError, ValueError):
    """Inconsistent or out-of-range parameters."""


class NearSingularError(WillmoreError, ArithmeticError):
    """Evaluation too close to a singular point (zero vector, degenerate element, singular pivot)."""


class UnsupportedRequestError(WillmoreError, NotImplementedError):
    """Requested quantity is not available for this model or tensor family."""


class NonconvergenceError(WillmoreError, RuntimeError):
    """Newton iteration failed to reach its tolerance.

    ``residuals`` holds the residual history of the failed solve.
    """

    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)
