"""Exception types shared across the package."""


class PipinnError(Exception):
    """Base class for all package errors."""


class NumericalError(PipinnError):
    """A numerical failure (maps to CLI exit code 3)."""


class NotPositiveDefinite(NumericalError):
    pass


class UnsupportedOperator(PipinnError):
    pass


class NonFiniteLoss(NumericalError):
    pass


class NonFiniteIteration(NumericalError):
    pass


class MissingLinearization(PipinnError):
    pass


class DimensionMismatch(PipinnError, ValueError):
    pass


class QuadratureNonConvergent(NumericalError):
    pass


class CflViolation(NumericalError):
    pass


class NonFiniteSolution(NumericalError):
    pass


class ZeroReference(PipinnError, ValueError):
    pass


class ConfigError(PipinnError):
    """Invalid experiment configuration (CLI exit code 2)."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
