"""Exception and warning classes raised by the solvers."""


class ImpulseControlError(Exception):
    """Base class for every error raised by this package."""


class NonCommensurate(ImpulseControlError, ValueError):
    """Horizon or delay is not an integer multiple of the time step."""


class DistinctItems(ImpulseControlError, ValueError):
    """Impulse menu contains duplicated items."""


class InadmissibleTrace(ImpulseControlError, ValueError):
    """A realized impulse schedule violates the spacing/horizon constraints."""


class InadmissibleRule(ImpulseControlError, ValueError):
    """A strategy rule does not fit the model it is evaluated on."""


class MissingChild(ImpulseControlError, LookupError):
    """A cumulative impulse value needed by an obstacle was never computed."""


class ObstacleViolation(ImpulseControlError, ArithmeticError):
    """A value field fell below its obstacle (internal consistency failure)."""


class OverflowRisk(ImpulseControlError, OverflowError):
    """Exponential utility would overflow 64-bit floats; use log space."""


class NonPositiveRate(ImpulseControlError, ValueError):
    pass


class NoConvergence(ImpulseControlError, RuntimeError):
    def __init__(self, n_max, residual):
        super().__init__(f"no convergence after {n_max} iterations (last residual {residual:.3e})")
        self.n_max = n_max
        self.residual = residual


class TooLarge(ImpulseControlError, ValueError):
    """Instance exceeds what the brute-force oracle is allowed to enumerate."""


class BadSpec(ImpulseControlError, ValueError):
    """Path generator specification is invalid."""


class SingularDesignWarning(UserWarning):
    """Regression design was ill-conditioned; ridge fallback was used."""


class SeedCollisionWarning(UserWarning):
    """Out-of-sample ensemble shares its seed with the fitting ensemble."""
