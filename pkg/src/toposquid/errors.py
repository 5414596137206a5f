"""Exception types shared across the package."""


class DomainError(ValueError):
    """A physical parameter lies outside its allowed range."""


class DegeneracyError(DomainError):
    """A quantity is undefined at an exact parity degeneracy."""


class NumericalError(RuntimeError):
    """Base class for failures of a numerical procedure."""


class GridTooCoarseError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepRejectedError(NumericalError):
    def __init__(self, message, drift=None):
        super().__init__(message)
        self.drift = drift


class NoDoubleWellError(NumericalError):
    pass


class IncompleteBasisError(NumericalError):
    """A state is not represented by the retained eigenmodes."""


class ConfigError(ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
