"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    pass


class DegenerateOrientationError(InvalidArgumentError):
    """Raised when an image has no intensity variance to orient by."""


class NumericError(ArithmeticError):
    pass


class NotConvergedError(RuntimeError):
    """A solver stopped without meeting its constraint.

    ``best`` carries the last iterate so callers can still inspect it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class CacheInvalidError(RuntimeError):
    pass
