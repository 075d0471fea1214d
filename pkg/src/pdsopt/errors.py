"""Exception types raised across the package."""


class PdsError(Exception):
    """Base class for package errors."""


class ConfigError(PdsError, ValueError):
    """Invalid configuration or input data (CLI exit code 2)."""


class GridError(ConfigError):
    pass


class NoFanError(GridError):
    """Requested an auxiliary fan at a boundary point."""


class NumericalError(PdsError, ArithmeticError):
    """Numerical failure during analysis or optimization (CLI exit code 3)."""


class DegenerateTriangleError(NumericalError):
    def __init__(self, message, point=None, triangle=None):
        super().__init__(message)
        self.point = point
        self.triangle = triangle


class SingularStiffnessError(NumericalError):
    def __init__(self, message, null_vector=None):
        super().__init__(message)
        self.null_vector = null_vector


class SolverError(NumericalError):
    """Lower-level solve aborted; ``iterate`` holds the offending point."""

    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate
