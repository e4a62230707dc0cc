"""Ruin-theory quantities built on the refracted identities."""

import logging
import math

import numpy as np
import pydantic
from scipy import optimize

from refracted import config as config_lib
from refracted import errors
from refracted import identities
from refracted import levy
from refracted import scale
from refracted import util
from refracted.special import MittagLeffler


class DividendQuery(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(frozen=True)

    x: float
    q: float = pydantic.Field(gt=0)
    refraction: levy.RefractionConfig


class DividendClosedForm(identities.IdentityResult):
    # j = 0 term of the partial fraction sum; vanishes identically.
    zero_term: float = 0.0


class PastingDiagnostics(pydantic.BaseModel):
    left_deriv: float
    right_deriv: float
    gap: float
    residual: float
    condition_holds: bool


def _PastingDenominator(k: identities.Kernels) -> float:
    """phi int_0^inf e^{-phi y} W'(y + b) dy."""
    return k.phi * k.DeltaShift(k.b) / k.delta


def DividendValue(
    model: levy.LevyModel, query: DividendQuery
) -> identities.IdentityResult:
    """Expected discounted dividends paid at rate delta above b until ruin."""
    k = identities.Kernels(model, query.refraction, query.q)
    x, b, q, delta = query.x, k.b, query.q, k.delta
    if x < 0:
        return identities.IdentityResult(value=0.0, method="closed_form")
    value = delta / q * (1.0 - k.WW.Z(x - b)) + k.N(x) / _PastingDenominator(k)
    return identities.IdentityResult(
        value=value, quadrature_error=k.error, method=k.Method()
    )


def DividendValueHyperExp(
    model: levy.LevyModel, query: DividendQuery
) -> DividendClosedForm:
    """Dividend value from the partial fraction forms of W and WW."""
    refraction = query.refraction
    levy.ValidateRefraction(model, refraction)
    q, x, b, delta = query.q, query.x, refraction.b, refraction.delta
    w = scale.HyperExpPartialFractions(model, 0.0, q)
    ww = scale.HyperExpPartialFractions(model, delta, q)
    th, d = np.array(w.roots), np.array(w.coefficients)
    tt, dd = np.array(ww.roots), np.array(ww.coefficients)
    phi = tt[0]

    weights = d * th * np.exp(th * b)
    K = phi * np.sum(weights / (phi - th))

    # bracket_j = K^{-1} sum_i D~_j D_i theta_i e^{theta_i b} / (theta~_j - theta_i)
    #             - D~_j / theta~_j
    brackets = dd * (np.sum(weights / np.subtract.outer(tt, th), axis=1) / K - 1.0 / tt)
    if x < 0:
        value = 0.0
    elif x <= b:
        value = float(np.sum(d * np.exp(th * x)) / K)
    else:
        tail = np.sum(brackets[1:] * np.exp(tt[1:] * (x - b)))
        value = float(delta / q + delta * tail)
    return DividendClosedForm(
        value=value, method="closed_form", zero_term=float(brackets[0])
    )


class OvershootLaw(object):
    """Joint law of (U at ruin, U just before ruin) for q = 0 and 0 < delta < E(X_1)."""

    def __init__(
        self, model: levy.LevyModel, refraction: levy.RefractionConfig, x: float
    ):
        self.model = model
        self.x = x
        self.resolvent = identities.ResolventKilledBelow(model, refraction, x, 0.0)

    def Density(self, over: float, under: float) -> float:
        """Density at U_ruin = over < 0, U_before = under >= 0."""
        if not (over < 0 <= under):
            return 0.0
        jump = float(self.model.LevyDensity(under - over))
        return jump * self.resolvent._Scalar(under)

    def Mass(
        self, A: tuple[float, float], B: tuple[float, float]
    ) -> identities.IdentityResult:
        a_lo, a_hi = A
        b_lo, b_hi = max(B[0], 0.0), B[1]
        a_hi = min(a_hi, 0.0)
        if a_lo >= a_hi or b_lo >= b_hi:
            return identities.IdentityResult(value=0.0, method="closed_form")

        def Kernel(y):
            # Pi{theta : y - theta in (a_lo, a_hi]}
            jumps = float(self.model.JumpTail(y - a_hi)) - float(
                self.model.JumpTail(y - a_lo)
            )
            return jumps * self.resolvent._Scalar(y)

        if math.isinf(b_hi):
            tol = config_lib.NUMERICS.tail_tol
            span = 1.0
            while span < 1024 and abs(Kernel(b_lo + span)) > tol:
                span *= 2
            b_hi = b_lo + span
        points = (self.resolvent.x,) + self.resolvent.points
        value, err = util.Quad(Kernel, b_lo, b_hi, points=points)
        return identities.IdentityResult(
            value=value, quadrature_error=err, method="quadrature"
        )


def OvershootUndershoot(
    model: levy.LevyModel,
    refraction: levy.RefractionConfig,
    x: float,
    A: tuple[float, float],
    B: tuple[float, float],
) -> identities.IdentityResult:
    """P_x(U at ruin in A, U just before ruin in B)."""
    return OvershootLaw(model, refraction, x).Mass(A, B)


def SmoothPastingGap(
    model: levy.LevyModel, refraction: levy.RefractionConfig, q: float
) -> PastingDiagnostics:
    """One sided derivatives of the dividend value at b."""
    k = identities.Kernels(model, refraction, q)
    denominator = _PastingDenominator(k)
    slope = k.W.Eval(k.b, 1)
    ww0 = k.WW.W(0.0)
    left = slope / denominator
    right = -k.delta * ww0 + slope * (1.0 + k.delta * ww0) / denominator
    residual = denominator - slope
    return PastingDiagnostics(
        left_deriv=left,
        right_deriv=right,
        gap=right - left,
        residual=residual,
        condition_holds=abs(residual) < 1e-6 * max(1.0, abs(denominator)),
    )


def SmoothPastingLevel(
    model: levy.LevyModel, delta: float, q: float, b_max: float = 50.0
) -> float:
    """Barrier b* at which the pasting condition holds."""

    def Residual(b):
        refraction = levy.RefractionConfig(delta=delta, b=b)
        return SmoothPastingGap(model, refraction, q).residual

    grid = np.linspace(0.0, b_max, 101)
    values = [Residual(b) for b in grid]
    for lo, hi, flo, fhi in zip(grid[:-1], grid[1:], values[:-1], values[1:]):
        if flo == 0:
            return float(lo)
        if np.sign(flo) != np.sign(fhi):
            level = optimize.brentq(Residual, lo, hi, xtol=1e-13)
            logging.info(f"Pasting level b*={level:.10g} for delta={delta} q={q}")
            return float(level)
    raise errors.InvalidQuery(
        f"no barrier in [0, {b_max}] satisfies the pasting condition", q=q, delta=delta
    )


def RuinProbabilityStable(
    x: float, b: float, c: float, delta: float, alpha: float
) -> identities.IdentityResult:
    """Ruin probability of the refracted model psi(theta) = c theta + theta^alpha."""
    if not 1 < alpha < 2:
        raise errors.ModelDomainError(f"alpha must be in (1, 2), got {alpha}")
    if not c > delta > 0:
        raise errors.HypothesisHViolation(c, delta)
    if x < 0 or b < 0:
        raise errors.InvalidQuery(f"need x, b >= 0, got x={x}, b={b}")
    if x == 0:
        return identities.IdentityResult(value=1.0, method="closed_form")

    beta = alpha - 1
    drift = c - delta
    prefactor = drift / (drift + delta * MittagLeffler(beta, -c * b**beta))
    brace = 1.0 - MittagLeffler(beta, -c * x**beta)
    err = 0.0
    method = "closed_form"
    if x > b:

        def Integrand(y):
            outer = 1.0 - MittagLeffler(beta, -drift * (x - y) ** beta)
            return outer * MittagLeffler(beta, -c * y**beta, 1)

        if b == 0:
            integral, err = util.Quad(
                Integrand, 0.0, x, weight="alg", wvar=(beta - 1, 0)
            )
        else:
            integral, err = util.Quad(lambda y: Integrand(y) * y ** (beta - 1), b, x)
        brace += c * delta * beta / drift * integral
        method = "quadrature"
    return identities.IdentityResult(
        value=1.0 - prefactor * brace, quadrature_error=err, method=method
    )
