"""Exception hierarchy shared by every module of the package."""


class ResolventError(Exception):
    """Base class for all errors raised by :mod:`resolvgreedy`."""


class NonPositiveCoefficient(ResolventError, ValueError):
    pass


class UnknownParameter(ResolventError, KeyError):
    pass


class GridMismatch(ResolventError, ValueError):
    pass


class EmptyFamily(ResolventError, ValueError):
    pass


class EmptyBasis(ResolventError, ValueError):
    pass


class ProbeOutOfDomain(ResolventError, ValueError):
    pass


class ProbeUnresolved(ResolventError, ValueError):
    pass


class DegenerateProbe(ResolventError, ValueError):
    pass


class OracleTooLarge(ResolventError, ValueError):
    pass


class AlignmentError(ResolventError, ValueError):
    pass


class NumericalBreakdown(ResolventError, ArithmeticError):
    """The minimax LP solver exceeded its iteration cap."""


class NoConvergence(ResolventError, ArithmeticError):
    """Power iteration hit its cap; ``estimate`` holds the last iterate."""

    def __init__(self, message, estimate=None, iterations=None):
        super().__init__(message)
        self.estimate = estimate
        self.iterations = iterations


class ConfigError(ResolventError, ValueError):
    """Invalid experiment configuration; ``path`` locates the offending key."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
