"""Exception hierarchy shared by all modules."""


class EpichaosError(Exception):
    """Base class for package errors."""


class DomainError(EpichaosError, ValueError):
    """A density or probability argument lies outside [0, 1]."""


class ParameterError(EpichaosError, ValueError):
    """A model or numerical parameter is outside its admissible range."""


class NumericalError(EpichaosError, ArithmeticError):
    """A numerical routine failed (e.g. a root was not bracketed)."""


class TableError(EpichaosError, ValueError):
    """A percolation table is empty, unsorted or otherwise malformed."""


class InsufficientDataError(TableError):
    pass


class RetryBudgetError(EpichaosError, RuntimeError):
    """Rejection sampling exhausted its attempt budget."""

    def __init__(self, message, attempts):
        super().__init__(message)
        self.attempts = attempts


class ConfigError(EpichaosError, ValueError):
    pass
