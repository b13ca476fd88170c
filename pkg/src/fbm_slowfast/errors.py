"""Exception hierarchy shared by all modules."""


class SlowFastError(Exception):
    """Base class for every error raised by the package."""


class StructureError(SlowFastError, ValueError):
    """Shapes, grids or component counts do not match."""


class ParameterError(SlowFastError, ValueError):
    """A model parameter lies outside its admissible range."""


class NumericalError(SlowFastError, ArithmeticError):
    """A numerical procedure failed (factorization, quadrature, blow-up)."""


class SizeError(SlowFastError, ValueError):
    """A problem exceeds a configured size cap."""


class CFLError(NumericalError):
    """Time step rejected by the advective stability check.

    ``suggested_dt`` carries a step that would pass the check.
    """

    def __init__(self, message, courant, suggested_dt):
        super().__init__(message)
        self.courant = courant
        self.suggested_dt = suggested_dt


class ConfigError(SlowFastError, ValueError):
    """Invalid experiment configuration."""
