"""Exception types shared across the package."""


class StalesimError(Exception):
    """Base class for all package errors."""


class VectorLengthError(StalesimError, ValueError):
    """Two vectors of different lengths were combined."""


class NonFiniteError(StalesimError, ArithmeticError):
    """A vector operation produced (or received) NaN or Inf."""


class GradientUnderflowError(StalesimError, ArithmeticError):
    """Finite-difference step too small: loss differences underflowed to zero."""


class UnsupportedModelError(StalesimError, TypeError):
    """Operation requires an analytic Hessian the model kind does not have."""


class ProtocolInvariantError(StalesimError, RuntimeError):
    """A cluster-protocol invariant was violated during simulation (internal bug)."""


class ConfigError(StalesimError, ValueError):
    """Experiment configuration failed to parse or validate.

    ``field`` names the offending key when one can be identified.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class RunIOError(StalesimError, OSError):
    """Reading or writing run artifacts failed."""
