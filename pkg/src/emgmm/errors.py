"""Exception hierarchy.

Input-validation failures derive from :class:`GmmInputError` (CLI exit code 1);
numerical failures derive from :class:`GmmNumericalError` (CLI exit code 3).
"""


class GmmError(Exception):
    """Base class for every error raised by this package."""


class GmmInputError(GmmError, ValueError):
    pass


class GmmNumericalError(GmmError, ArithmeticError):
    pass


class WeightsNotNormalized(GmmInputError):
    pass


class NonPositiveWeight(GmmInputError):
    pass


class DuplicateMeans(GmmInputError):
    pass


class NonFiniteInput(GmmInputError):
    pass


class ShapeMismatch(GmmInputError):
    pass


class DimensionTooSmall(GmmInputError):
    pass


class DomainError(GmmInputError):
    pass


class RegionViolation(GmmInputError):
    pass


class ConfigError(GmmInputError):
    pass


class ParseError(GmmInputError):
    pass


class DegenerateComponent(GmmNumericalError):
    def __init__(self, component, iteration=None, detail=""):
        self.component = component
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        msg = f"component {component} has vanishing total responsibility{where}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class QuadratureNotConverged(GmmNumericalError):
    pass


class PowerIterationNotConverged(GmmNumericalError):
    pass


class MomentExplosion(GmmNumericalError):
    pass
