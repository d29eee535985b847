"""Exception hierarchy shared by all solver modules."""


class SPSError(Exception):
    """Base class for every error raised by :mod:`sps_lab`."""


class InvalidFieldError(SPSError, ValueError):
    pass


class ParameterError(SPSError, ValueError):
    pass


class DegenerateError(SPSError, ValueError):
    """Raised when an operation needs a nonzero field and got (numerically) zero."""


class GeometryError(SPSError, ValueError):
    pass


class TruncationRiskError(SPSError):
    """The density does not decay inside the box; the free-space solve would be wrong."""


class ShootingBracketError(SPSError):
    pass


class NonConvergenceError(SPSError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class StepSizeError(SPSError):
    pass


class OutsideTubeError(SPSError):
    """Newton on the translation parameter stagnated: input is too far from the orbit."""


class OutsideNeighborhoodError(NonConvergenceError):
    """Branch Newton did not converge: (rho, omega) too far from the base point."""


class InvalidPathError(SPSError, ValueError):
    pass


class ConfigError(SPSError, ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
