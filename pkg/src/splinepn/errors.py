"""Exception hierarchy.

Two families: :class:`ValidationError` for bad inputs (CLI exit code 2) and
:class:`NumericalError` for failures during computation (CLI exit code 3).
"""


class SplinePNError(Exception):
    """Base class for all package errors."""


class ValidationError(SplinePNError, ValueError):
    """Inputs violate a documented precondition."""


class NumericalError(SplinePNError, ArithmeticError):
    """A computation failed on valid inputs."""


class InvalidBasisError(ValidationError):
    pass


class InvalidDomainError(ValidationError):
    pass


class OutOfDomainError(ValidationError):
    pass


class DimensionError(ValidationError):
    pass


class DerivativeUndefinedError(ValidationError):
    pass


class InputOrderError(ValidationError):
    pass


class InvalidBoundError(ValidationError):
    pass


class DegenerateGridError(ValidationError):
    pass


class ConfigError(ValidationError):
    """Configuration could not be parsed or validated."""


class SingularConditioningError(NumericalError):
    pass


class NotPSDError(NumericalError):
    pass


class FieldEvaluationError(NumericalError):
    """The vector field returned a non-finite value."""

    def __init__(self, t, u, value):
        self.t = t
        self.u = u
        self.value = value
        super().__init__(f"field returned non-finite value {value!r} at t={t!r}, u={u!r}")


class DivergenceError(NumericalError):
    """The solver state became non-finite."""

    def __init__(self, step_index, t):
        self.step_index = step_index
        self.t = t
        super().__init__(f"solver state became non-finite at step {step_index} (t={t!r})")


class DegeneratePosteriorError(NumericalError):
    pass


class RateUndefinedError(NumericalError):
    pass
