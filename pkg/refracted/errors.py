"""Error types raised by the refracted package."""

from typing import Any


class RefractedError(Exception):
    """Base class for all package errors."""

    def __init__(self, message: str, **fields: Any):
        super().__init__(message)
        self.fields = fields

    def Details(self) -> dict:
        return dict(error=type(self).__name__, message=str(self), **self.fields)


class InvalidInputError(RefractedError):
    """Input rejected before any numerical work."""


class NumericalError(RefractedError):
    """A numerical method failed to meet its tolerance."""


class HypothesisHViolation(InvalidInputError):
    """Refraction drift not strictly below c for a bounded variation model."""

    def __init__(self, c: float, delta: float):
        super().__init__(
            f"hypothesis (H) requires 0 < delta < c, got c={c}, delta={delta}",
            c=c,
            delta=delta,
        )


class NonPositiveDelta(InvalidInputError):
    """Refraction drift must be strictly positive."""

    def __init__(self, delta: float):
        super().__init__(f"delta must be > 0, got {delta}", delta=delta)


class ModelDomainError(InvalidInputError):
    """Laplace exponent evaluated outside its domain."""


class DegenerateDrift(InvalidInputError):
    """q = 0 with E(X_1) equal to delta; perturb q."""


class DriftNotDominating(InvalidInputError):
    """Formula needs 0 < delta < E(X_1)."""

    def __init__(self, mean: float, delta: float):
        super().__init__(
            f"requires 0 < delta < E(X_1), got E(X_1)={mean}, delta={delta}",
            mean=mean,
            delta=delta,
            regime_note="ruin is certain when delta >= E(X_1); probability is 1",
        )


class NonpositiveQ(InvalidInputError):
    """Identity is only defined for q > 0."""

    def __init__(self, q: float):
        super().__init__(f"q must be > 0, got {q}", q=q)


class InvalidQuery(InvalidInputError):
    """Query levels outside the identity's domain."""


class SchemeMismatch(InvalidInputError):
    """Simulation scheme does not apply to this model."""


class SecondDerivativeUnavailable(InvalidInputError):
    """W'' requested for a model without Gaussian part or closed form."""


class RootSeparationFailure(NumericalError):
    """Two roots of the partial fraction expansion coincide."""


class InversionError(NumericalError):
    """Numerical Laplace inversion disagreed with its own error estimate."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not converge."""


class BiasBudgetExceeded(NumericalError):
    """Horizon truncation bias could not be pushed below the stderr budget."""
