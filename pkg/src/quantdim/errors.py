"""Exception hierarchy; ``exit_code`` is what the command line returns."""


class QuantdimError(Exception):
    exit_code = 1


class ConfigError(QuantdimError, ValueError):
    """Invalid measure description or parameters."""


class SpecError(ConfigError):
    """A measure description violates its own invariants."""


class ConstructionError(ConfigError):
    """A measure table could not be built (e.g. a non-finite cube mass)."""


class DomainError(ConfigError):
    """Parameter outside the mathematical domain of an operation."""


class CapacityError(QuantdimError, OverflowError):
    """Integer cube arithmetic would overflow."""

    exit_code = 3


class DepthError(QuantdimError):
    """A target could not be reached within the truncation depth."""

    exit_code = 3

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DivergenceError(QuantdimError, ArithmeticError):
    """The requested quantity is infinite (or the error is zero)."""

    exit_code = 2


class NoCrossingError(QuantdimError):
    """The extrapolated partition function does not change sign on the bracket."""

    exit_code = 2


class BracketError(QuantdimError):
    """Inconsistent dimension estimates give an empty search bracket."""

    exit_code = 2
