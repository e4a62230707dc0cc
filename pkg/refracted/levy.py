"""Spectrally negative Lévy models, Laplace exponents and their right inverses."""

from typing import Annotated, Literal, Union
import logging
import math

import numpy as np
import pydantic
from scipy import optimize, special

from refracted import errors


class _Frozen(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(
        frozen=True, extra="forbid", populate_by_name=True
    )


def _Scalar(v):
    if isinstance(v, np.ndarray) and v.ndim == 0:
        return v[()]
    return v


class NoJumps(_Frozen):
    """Pi = 0: Brownian motion with drift (or pure drift)."""

    type: Literal["none"] = "none"

    def BoundedVariation(self) -> bool:
        return True

    def Exponent(self, theta):
        return np.zeros_like(np.asarray(theta))

    def ExponentDeriv(self, theta, order: int = 1):
        return np.zeros_like(np.asarray(theta))

    def Mean(self) -> float:
        return 0.0

    def DriftShift(self) -> float:
        return 0.0

    def Density(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def Tail(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def BigJumpRate(self, eps: float) -> float:
        return 0.0

    def BigJumpMean(self, eps: float) -> float:
        return 0.0

    def SmallJumpVariance(self, eps: float) -> float:
        return 0.0

    def SampleBigJumps(self, rng: np.random.Generator, eps: float, size: int):
        return np.zeros(size)


class _HyperExpMethods(object):
    """Shared formulas for Pi(dx) = lambda sum_k A_k alpha_k e^{-alpha_k x} dx."""

    def _Arrays(self) -> tuple[float, np.ndarray, np.ndarray]:
        return self.intensity, np.array(self.weights), np.array(self.rates)

    def BoundedVariation(self) -> bool:
        return True

    def _CheckPoles(self, theta: np.ndarray):
        _, _, alpha = self._Arrays()
        real = np.real(theta)[..., None]
        on_axis = (np.imag(theta) == 0)[..., None]
        if np.any(on_axis & (real == -alpha)):
            raise errors.ModelDomainError(
                f"Laplace exponent has a pole at theta in {(-alpha).tolist()}"
            )

    def Exponent(self, theta):
        theta = np.asarray(theta)
        self._CheckPoles(theta)
        lam, A, alpha = self._Arrays()
        t = theta[..., None]
        return -lam * np.sum(A * t / (alpha + t), axis=-1)

    def ExponentDeriv(self, theta, order: int = 1):
        assert order >= 1, order
        theta = np.asarray(theta)
        self._CheckPoles(theta)
        lam, A, alpha = self._Arrays()
        t = theta[..., None]
        sign = (-1.0) ** (order - 1)
        return -lam * sign * math.factorial(order) * np.sum(
            A * alpha / (alpha + t) ** (order + 1), axis=-1
        )

    def Mean(self) -> float:
        lam, A, alpha = self._Arrays()
        return float(-lam * np.sum(A / alpha))

    def DriftShift(self) -> float:
        # int_(0,1) x Pi(dx)
        lam, A, alpha = self._Arrays()
        return float(lam * np.sum(A * (1 - np.exp(-alpha) * (1 + alpha)) / alpha))

    def Density(self, x):
        lam, A, alpha = self._Arrays()
        x = np.asarray(x, dtype=float)
        pos = np.where(x > 0, x, 0.0)[..., None]
        d = lam * np.sum(A * alpha * np.exp(-alpha * pos), axis=-1)
        return np.where(x > 0, d, 0.0)

    def Tail(self, x):
        """Pi(x, infinity)."""
        lam, A, alpha = self._Arrays()
        x = np.maximum(np.asarray(x, dtype=float), 0.0)[..., None]
        return lam * np.sum(A * np.exp(-alpha * x), axis=-1)

    def BigJumpRate(self, eps: float) -> float:
        return float(self.Tail(eps))

    def BigJumpMean(self, eps: float) -> float:
        lam, A, alpha = self._Arrays()
        return float(lam * np.sum(A * np.exp(-alpha * eps) * (eps + 1 / alpha)))

    def SmallJumpVariance(self, eps: float) -> float:
        lam, A, alpha = self._Arrays()
        return float(lam * np.sum(A * 2 / alpha**2 * special.gammainc(3, alpha * eps)))

    def SampleBigJumps(self, rng: np.random.Generator, eps: float, size: int):
        _, A, alpha = self._Arrays()
        p = A * np.exp(-alpha * eps)
        k = rng.choice(len(alpha), size=size, p=p / p.sum())
        return eps + rng.standard_exponential(size) / alpha[k]


class HyperExponentialJumps(_HyperExpMethods, _Frozen):
    type: Literal["hyperexp"] = "hyperexp"
    intensity: float = pydantic.Field(alias="lambda", gt=0)
    weights: tuple[float, ...]
    rates: tuple[float, ...]

    @pydantic.model_validator(mode="after")
    def _Check(self):
        if len(self.weights) != len(self.rates) or not self.rates:
            raise ValueError("weights and rates must be non-empty and equal length")
        if any(w <= 0 for w in self.weights) or any(r <= 0 for r in self.rates):
            raise ValueError("weights and rates must be positive")
        if abs(sum(self.weights) - 1) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {sum(self.weights)}")
        if len(set(self.rates)) != len(self.rates):
            raise ValueError("rates must be distinct")
        return self


class ExponentialJumps(_HyperExpMethods, _Frozen):
    type: Literal["exp"] = "exp"
    intensity: float = pydantic.Field(alias="lambda", gt=0)
    rate: float = pydantic.Field(gt=0)

    @property
    def weights(self) -> tuple[float, ...]:
        return (1.0,)

    @property
    def rates(self) -> tuple[float, ...]:
        return (self.rate,)


class StableJumps(_Frozen):
    """Pi(dx) = C x^{-1-alpha} dx normalised so the jump part contributes theta^alpha."""

    type: Literal["stable"] = "stable"
    alpha: float = pydantic.Field(gt=1, lt=2)

    @property
    def scale(self) -> float:
        a = self.alpha
        return a * (a - 1) / math.gamma(2 - a)

    def BoundedVariation(self) -> bool:
        return False

    def _CheckDomain(self, theta: np.ndarray):
        if np.isrealobj(theta) and np.any(theta < 0):
            raise errors.ModelDomainError("stable exponent needs theta >= 0")

    def Exponent(self, theta):
        theta = np.asarray(theta)
        self._CheckDomain(theta)
        return np.power(theta, self.alpha)

    def ExponentDeriv(self, theta, order: int = 1):
        theta = np.asarray(theta)
        self._CheckDomain(theta)
        a = self.alpha
        coef = special.poch(a - order + 1, order)
        return coef * np.power(theta, a - order)

    def Mean(self) -> float:
        return 0.0

    def DriftShift(self) -> float:
        return -self.scale / (self.alpha - 1)

    def Density(self, x):
        x = np.asarray(x, dtype=float)
        pos = np.where(x > 0, x, 1.0)
        return np.where(x > 0, self.scale * pos ** (-1 - self.alpha), 0.0)

    def Tail(self, x):
        x = np.asarray(x, dtype=float)
        pos = np.where(x > 0, x, 1.0)
        return np.where(x > 0, self.scale * pos ** (-self.alpha) / self.alpha, np.inf)

    def BigJumpRate(self, eps: float) -> float:
        return self.scale * eps ** (-self.alpha) / self.alpha

    def BigJumpMean(self, eps: float) -> float:
        return self.scale * eps ** (1 - self.alpha) / (self.alpha - 1)

    def SmallJumpVariance(self, eps: float) -> float:
        return self.scale * eps ** (2 - self.alpha) / (2 - self.alpha)

    def SampleBigJumps(self, rng: np.random.Generator, eps: float, size: int):
        return eps * (1.0 - rng.random(size)) ** (-1.0 / self.alpha)


JumpSpec = Annotated[
    Union[HyperExponentialJumps, ExponentialJumps, StableJumps, NoJumps],
    pydantic.Field(discriminator="type"),
]


class LevyModel(_Frozen):
    """psi(theta) = c theta + sigma^2 theta^2 / 2 + (jump part)."""

    c: float
    sigma: float = pydantic.Field(0.0, ge=0)
    jumps: JumpSpec = NoJumps()

    @pydantic.model_validator(mode="after")
    def _NotSubordinator(self):
        if self.sigma == 0 and self.jumps.BoundedVariation() and self.c <= 0:
            raise ValueError(
                f"bounded variation model needs c > 0 (got {self.c}); "
                "otherwise -X is a subordinator"
            )
        return self

    @classmethod
    def FromTriplet(cls, gamma: float, sigma: float, jumps) -> "LevyModel":
        return cls(c=gamma + jumps.DriftShift(), sigma=sigma, jumps=jumps)

    @property
    def gamma(self) -> float:
        return self.c - self.jumps.DriftShift()

    def BoundedVariation(self) -> bool:
        return self.sigma == 0 and self.jumps.BoundedVariation()

    def LaplaceExponent(self, theta):
        theta = np.asarray(theta)
        return _Scalar(
            self.c * theta + 0.5 * self.sigma**2 * theta**2 + self.jumps.Exponent(theta)
        )

    def LaplaceExponentDeriv(self, theta, order: int = 1):
        theta = np.asarray(theta)
        jump = self.jumps.ExponentDeriv(theta, order)
        if order == 1:
            return _Scalar(self.c + self.sigma**2 * theta + jump)
        if order == 2:
            return _Scalar(self.sigma**2 + jump)
        return _Scalar(jump)

    def Mean(self) -> float:
        """E(X_1) = psi'(0+)."""
        return self.c + self.jumps.Mean()

    def LevyDensity(self, x):
        return _Scalar(self.jumps.Density(x))

    def JumpTail(self, x):
        return _Scalar(self.jumps.Tail(x))

    def PhiInverse(self, delta: float = 0.0, q: float = 0.0) -> float:
        """Largest root of psi(theta) - delta theta = q."""
        assert q >= 0, q

        def f(th):
            return float(self.LaplaceExponent(th)) - delta * th - q

        def fp(th):
            return float(self.LaplaceExponentDeriv(th)) - delta

        if q == 0 and self.Mean() - delta >= 0:
            return 0.0

        lo = 0.0
        if q == 0:
            # f(0) = 0 with f'(0) < 0: the root sits right of the minimum of f.
            lo = optimize.brentq(fp, 0.0, _Expand(fp, 1.0), xtol=1e-14)
        hi = _Expand(f, max(1.0, 2 * lo))

        # Newton from the right converges monotonically for convex f.
        sol = optimize.root_scalar(
            f, fprime=fp, x0=hi, method="newton", xtol=1e-15, rtol=1e-14, maxiter=100
        )
        root = sol.root
        if not sol.converged or not lo <= root <= hi:
            logging.warning(
                f"Newton failed for phi(q={q}, delta={delta}); falling back to brentq"
            )
            root = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return float(root)


def _Expand(f, start: float) -> float:
    """Double start until f turns positive."""
    hi = start
    for _ in range(200):
        if f(hi) > 0:
            return hi
        hi *= 2
    raise errors.NumericalError(f"could not bracket root from {start}")


class RefractionConfig(_Frozen):
    """Drift delta removed while U is above level b."""

    delta: float
    b: float = pydantic.Field(0.0, ge=0)


def ValidateRefraction(model: LevyModel, refraction: RefractionConfig) -> None:
    """Raise unless delta > 0 and, for bounded variation models, delta < c."""
    if refraction.delta <= 0:
        raise errors.NonPositiveDelta(refraction.delta)
    if model.BoundedVariation() and not refraction.delta < model.c:
        raise errors.HypothesisHViolation(model.c, refraction.delta)
