"""Exception hierarchy shared by all accelfd modules."""


class AccelFDError(Exception):
    """Base class for every error raised by the package."""


class GridError(AccelFDError, ValueError):
    """Invalid grid construction or an operation on incompatible grids."""


class NestingError(GridError):
    """Two grids are not related by a refinement chain."""


class CoefficientError(AccelFDError, ValueError):
    """A coefficient or free term evaluated to a non-finite value."""


class DecompositionError(AccelFDError, ValueError):
    """A diffusion matrix cannot be written with nonnegative directional weights.

    The best nonnegative least-squares attempt is kept on the exception.
    """

    def __init__(self, message, weights=None, residual=float("nan")):
        super().__init__(message)
        self.weights = weights
        self.residual = residual


class NoiseError(AccelFDError, ValueError):
    """Invalid Wiener path request."""


class StabilityError(AccelFDError):
    """Explicit step violates the CFL guard."""


class SolverError(AccelFDError):
    """Linear solve failed or produced a non-finite state."""


class BlowUpError(SolverError):
    """The solution magnitude exceeded the blow-up threshold."""


class ConfigError(AccelFDError, ValueError):
    """Malformed experiment configuration."""
