"""Exception types shared across the package."""


class HpipgError(Exception):
    """Base class for package errors."""


class InvalidInput(HpipgError):
    """Problem data or arguments violate a precondition."""


class DimensionMismatch(InvalidInput):
    """Operands have incompatible shapes."""


class NotPositiveDefinite(HpipgError):
    """A matrix required to be symmetric positive definite is not."""


class IncompatibleScaling(HpipgError):
    """A separable set has no closed-form projection under the given scaling."""


class InvalidConfig(InvalidInput):
    """A configuration object carries out-of-range values."""


class OracleFailed(HpipgError):
    """The dense reference solver did not reach a verified solution."""
