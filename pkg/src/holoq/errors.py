"""Exception hierarchy for holoq."""


class HoloqError(Exception):
    """Base class for every error raised by the library."""


class InvalidDimensionError(HoloqError, ValueError):
    pass


class DimensionMismatchError(HoloqError, ValueError):
    pass


class HermiticityError(HoloqError, ValueError):
    pass


class IllConditionedDecompositionError(HoloqError):
    """The left/right bases could not be made bi-orthonormal to tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class NonConvergenceError(HoloqError):
    pass


class StructureChangeError(HoloqError):
    """Jordan or degeneracy structure differs between grid points."""

    def __init__(self, message, s=None):
        if s is not None:
            message = f"{message} at s={s:.6g}"
        super().__init__(message)
        self.s = s


class MatchingAmbiguityError(HoloqError):
    pass


class ResolutionError(HoloqError):
    """Path grid too coarse for the requested computation."""


class DegeneracyError(HoloqError):
    pass


class NotDegenerateError(HoloqError):
    pass


class SingularGaugeError(HoloqError):
    pass


class StabilityError(HoloqError):
    """Fixed-step integration refused because the step is too large."""

    def __init__(self, message, suggested_steps):
        super().__init__(f"{message}; use at least {suggested_steps} steps")
        self.suggested_steps = suggested_steps


class GapCollapseError(HoloqError):
    pass


class DegeneratePathError(HoloqError, ValueError):
    pass


class ConfigError(HoloqError, ValueError):
    pass
