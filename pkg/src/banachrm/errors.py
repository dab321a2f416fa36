"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when numeric input is non-finite or otherwise malformed."""


class DegenerateSubspaceError(ValueError):
    """Raised when a basis is rank deficient to working precision."""


class ConfigError(ValueError):
    """Raised for inconsistent problem or run configuration."""


class SingularCoefficientError(ValueError):
    """Raised when a coefficient vanishes where the construction needs it nonzero."""


class SolverFailure(RuntimeError):
    """Raised when an iterative solve stagnates or exhausts its budget.

    Attributes
    ----------
    iterate : object
        Best iterate reached before giving up.
    residual : float
        Residual norm at that iterate.
    info : dict
        Stage information (exponent, smoothing level, iteration counts).
    """

    def __init__(self, message, iterate=None, residual=float("nan"), info=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual
        self.info = dict(info or {})
