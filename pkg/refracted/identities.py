"""Fluctuation identities of the refracted process U_t = X_t - delta int_0^t 1{U_s > b} ds."""

from typing import Callable, Literal
import logging
import math

import numpy as np
import pandas as pd
import pydantic
from scipy import special

from refracted import config as config_lib
from refracted import errors
from refracted import levy
from refracted import scale
from refracted import util


Method = Literal["closed_form", "quadrature", "inversion", "limit"]


class IdentityResult(pydantic.BaseModel):
    value: float
    quadrature_error: float = pydantic.Field(0.0, serialization_alias="stderr_analytic")
    method: Method = "quadrature"


class ExitQuery(pydantic.BaseModel):
    """Start x, upper level a and discount q for a two sided exit problem."""

    model_config = pydantic.ConfigDict(frozen=True)

    x: float
    a: float
    q: float = pydantic.Field(0.0, ge=0)
    refraction: levy.RefractionConfig

    def Check(self):
        b = self.refraction.b
        if not 0 <= b <= self.a:
            raise errors.InvalidQuery(f"need 0 <= b <= a, got b={b}, a={self.a}")
        if not 0 <= self.x <= self.a:
            raise errors.InvalidQuery(f"need 0 <= x <= a, got x={self.x}, a={self.a}")


class Kernels(object):
    """Scale-function building blocks shared by the refracted identities.

    W is the scale function of X and WW that of X - delta t, both at discount q;
    Phi and phi are their right inverses.
    """

    def __init__(
        self, model: levy.LevyModel, refraction: levy.RefractionConfig, q: float
    ):
        levy.ValidateRefraction(model, refraction)
        self.model = model
        self.q = q
        self.delta = refraction.delta
        self.b = refraction.b
        self.W = scale.Build(model, 0.0, q)
        self.WW = scale.Build(model, self.delta, q)
        self.Phi = self.W.phi
        self.phi = self.WW.phi
        self.error = 0.0
        self.integrals = 0

    def _Quad(self, f: Callable[[float], float], lo: float, hi: float, points=()):
        value, err = util.Quad(f, lo, hi, points)
        self.error += err
        self.integrals += 1
        return value

    def Method(self) -> Method:
        return "quadrature" if self.integrals else "closed_form"

    def N(self, x: float) -> float:
        """W(x) + delta 1{x >= b} int_b^x WW(x-y) W'(y) dy."""
        value = self.W.W(x)
        if x > self.b:
            value += self.delta * self._Quad(
                lambda y: self.WW.W(x - y) * self.W.Eval(y, 1), self.b, x
            )
        return value

    def M(self, x: float) -> float:
        """Z(x) + delta q 1{x >= b} int_b^x WW(x-y) W(y) dy."""
        value = self.W.Z(x)
        if x > self.b and self.q > 0:
            value += (
                self.delta
                * self.q
                * self._Quad(lambda y: self.WW.W(x - y) * self.W.W(y), self.b, x)
            )
        return value

    def E(self, x: float, ref: float) -> float:
        """e^{-Phi ref} (e^{Phi x} + delta Phi 1{x >= b} int_b^x e^{Phi z} WW(x-z) dz)."""
        phi = self.Phi
        value = math.exp(phi * (x - ref))
        if x > self.b and phi > 0:
            value += (
                self.delta
                * phi
                * self._Quad(
                    lambda z: math.exp(phi * (z - ref)) * self.WW.W(x - z), self.b, x
                )
            )
        return value

    def H(self, x: float, y: float) -> float:
        """W(x-y) + delta 1{x >= b} int_b^x WW(x-z) W'(z-y) dz, for y < b."""
        value = self.W.W(x - y)
        if x > self.b:
            value += self.delta * self._Quad(
                lambda z: self.WW.W(x - z) * self.W.Eval(z - y, 1), self.b, x
            )
        return value

    def DeltaShift(self, s: float) -> float:
        """delta int_0^inf e^{-phi v} W'(v + s) dv.

        With phi = 0 (q = 0 and E(X_1) > delta) this is the q -> 0 limit
        1 - delta W(s), not the q = 0 integral.
        """
        if self.phi == 0:
            return 1.0 - self.delta * self.W.W(s)
        return self.delta * self.W.LaplaceShift(self.phi, s, 1)


def _Result(value: float, kernels: Kernels | None = None, method: Method | None = None):
    if kernels is None:
        return IdentityResult(value=value, method=method or "closed_form")
    return IdentityResult(
        value=value, quadrature_error=kernels.error, method=method or kernels.Method()
    )


def _RequirePositiveQ(q: float):
    if not q > 0:
        raise errors.NonpositiveQ(q)


def _RequireDominatingDrift(model: levy.LevyModel, delta: float):
    mean = model.Mean()
    if not 0 < delta < mean:
        raise errors.DriftNotDominating(mean, delta)


def TwoSidedUp(model: levy.LevyModel, query: ExitQuery) -> IdentityResult:
    """E_x[e^{-q kappa_a^+}; kappa_a^+ < kappa_0^-]."""
    query.Check()
    if query.x == query.a:
        return _Result(1.0)
    k = Kernels(model, query.refraction, query.q)
    return _Result(k.N(query.x) / k.N(query.a), k)


def TwoSidedDown(model: levy.LevyModel, query: ExitQuery) -> IdentityResult:
    """E_x[e^{-q kappa_0^-}; kappa_0^- < kappa_a^+]."""
    query.Check()
    if query.x == query.a:
        return _Result(0.0)
    k = Kernels(model, query.refraction, query.q)
    value = k.M(query.x) - k.M(query.a) * k.N(query.x) / k.N(query.a)
    return _Result(value, k)


def OneSidedUp(
    model: levy.LevyModel,
    refraction: levy.RefractionConfig,
    x: float,
    a: float,
    q: float,
) -> IdentityResult:
    """E_x[e^{-q kappa_a^+}; kappa_a^+ < infinity]."""
    if not (x <= a and refraction.b <= a):
        raise errors.InvalidQuery(f"need x, b <= a, got x={x}, b={refraction.b}, a={a}")
    if q < 0:
        raise errors.InvalidQuery(f"q must be >= 0, got {q}", q=q)
    if x == a:
        return _Result(1.0)
    k = Kernels(model, refraction, q)
    return _Result(k.E(x, a) / k.E(a, a), k)


def OneSidedDown(
    model: levy.LevyModel, refraction: levy.RefractionConfig, x: float, q: float
) -> IdentityResult:
    """E_x[e^{-q kappa_0^-}; kappa_0^- < infinity]."""
    _RequirePositiveQ(q)
    if x < 0:
        return _Result(1.0)
    k = Kernels(model, refraction, q)
    # q int_b^inf e^{-phi y} W / int_b^inf e^{-phi y} W', via W(b) + LS1 = phi LS0
    ratio = q / k.phi * (1.0 + k.delta * k.W.W(k.b) / k.DeltaShift(k.b))
    return _Result(k.M(x) - ratio * k.N(x), k)


def RuinProbability(
    model: levy.LevyModel, refraction: levy.RefractionConfig, x: float
) -> IdentityResult:
    """P_x(kappa_0^- < infinity) for 0 < delta < E(X_1)."""
    levy.ValidateRefraction(model, refraction)
    _RequireDominatingDrift(model, refraction.delta)
    if x < 0:
        return _Result(1.0)
    k = Kernels(model, refraction, 0.0)
    mean, delta = model.Mean(), refraction.delta
    value = 1.0 - (mean - delta) / (1.0 - delta * k.W.W(k.b)) * k.N(x)
    return _Result(value, k)


def ClassicalRuinProbability(
    model: levy.LevyModel, delta: float, x: float
) -> IdentityResult:
    """Ruin probability 1 - (E(X_1) - delta) WW(x) of Y = X - delta t."""
    mean = model.Mean()
    if not delta < mean:
        raise errors.DriftNotDominating(mean, delta)
    ww = scale.Build(model, delta, 0.0)
    tag = "closed_form" if ww.method == "closed_form" else "inversion"
    return _Result(1.0 - (mean - delta) * ww.W(x), method=tag)


class ResolventDensity(object):
    """y -> u^{(q)}(x, y) on [lower, upper], with masses of subintervals."""

    def __init__(
        self,
        kind: str,
        x: float,
        q: float,
        lower: float,
        upper: float,
        density: Callable[[float], float],
        points=(),
    ):
        self.kind = kind
        self.x = x
        self.q = q
        self.lower = lower
        self.upper = upper
        self._density = density
        self.points = tuple(sorted(p for p in points if lower < p < upper))

    def _Scalar(self, y: float) -> float:
        if not self.lower <= y <= self.upper:
            return 0.0
        return self._density(y)

    def Density(self, y):
        return util.Vectorize(self._Scalar)(y)

    def _Cutoff(self, ref: float, direction: float) -> float:
        tol = config_lib.NUMERICS.tail_tol
        step = 1.0
        value = abs(self._Scalar(ref + direction * step))
        while step < 1024 and value > tol:
            # Far below 0 the density is a difference of growing terms.
            # Stop at the noise floor.
            following = abs(self._Scalar(ref + 2 * direction * step))
            if following >= value:
                return ref + direction * step
            step *= 2
            value = following
        if step >= 1024:
            logging.warning(
                f"{self.kind} resolvent tail above {tol} at {ref + direction * step}"
            )
        return ref + direction * step

    def Mass(self, lo: float = -math.inf, hi: float = math.inf) -> IdentityResult:
        """int over [lo, hi] of the density; infinite ends are cut at the tail tolerance."""
        lo, hi = max(lo, self.lower), min(hi, self.upper)
        if lo >= hi:
            return _Result(0.0)
        anchors = self.points + (self.x,)
        if math.isinf(hi):
            if self.q == 0:
                raise errors.InvalidQuery(
                    f"{self.kind} resolvent has infinite mass on unbounded sets at q=0"
                )
            hi = self._Cutoff(max(max(anchors), lo), 1.0)
        if math.isinf(lo):
            lo = self._Cutoff(min(min(anchors), hi), -1.0)
        value, err = util.Quad(self._Scalar, lo, hi, points=anchors)
        return IdentityResult(value=value, quadrature_error=err, method="quadrature")

    def Table(self, grid) -> pd.DataFrame:
        grid = np.asarray(grid, dtype=float)
        return pd.DataFrame(dict(y=grid, density=self.Density(grid)))


def ResolventTwoSided(
    model: levy.LevyModel, query: ExitQuery
) -> ResolventDensity:
    """Resolvent of U killed on leaving [0, a]."""
    query.Check()
    k = Kernels(model, query.refraction, query.q)
    x, a, b = query.x, query.a, k.b
    ratio = k.N(x) / k.N(a)

    def Density(y):
        if y >= b:
            return ratio * k.WW.W(a - y) - k.WW.W(x - y)
        return ratio * k.H(a, y) - k.H(x, y)

    return ResolventDensity("two_sided", x, query.q, 0.0, a, Density, (b,))


def ResolventKilledBelow(
    model: levy.LevyModel, refraction: levy.RefractionConfig, x: float, q: float
) -> ResolventDensity:
    """Resolvent of U killed on entering (-inf, 0).

    q = 0 is allowed when 0 < delta < E(X_1), using the q -> 0 limit.
    """
    if q < 0:
        raise errors.NonpositiveQ(q)
    if q == 0:
        _RequireDominatingDrift(model, refraction.delta)
    if x < 0:
        raise errors.InvalidQuery(f"need x >= 0, got {x}")
    k = Kernels(model, refraction, q)
    b = k.b
    n = k.N(x)
    base = k.DeltaShift(b)

    def Density(y):
        if y >= b:
            return n * math.exp(-k.phi * (y - b)) / base - k.WW.W(x - y)
        return k.DeltaShift(b - y) / base * n - k.H(x, y)

    return ResolventDensity("killed_below", x, q, 0.0, math.inf, Density, (b,))


def ResolventKilledAbove(
    model: levy.LevyModel,
    refraction: levy.RefractionConfig,
    x: float,
    a: float,
    q: float,
) -> ResolventDensity:
    """Resolvent of U killed on entering (a, inf)."""
    if not (x <= a and refraction.b <= a):
        raise errors.InvalidQuery(f"need x, b <= a, got x={x}, b={refraction.b}, a={a}")
    if q < 0:
        raise errors.InvalidQuery(f"q must be >= 0, got {q}", q=q)
    k = Kernels(model, refraction, q)
    b = k.b
    ratio = k.E(x, a) / k.E(a, a)

    def Density(y):
        if y >= b:
            return ratio * k.WW.W(a - y) - k.WW.W(x - y)
        return ratio * k.H(a, y) - k.H(x, y)

    return ResolventDensity("killed_above", x, q, -math.inf, a, Density, (b,))


def ResolventFree(
    model: levy.LevyModel, refraction: levy.RefractionConfig, x: float, q: float
) -> ResolventDensity:
    """Resolvent of U without killing; total mass 1/q."""
    _RequirePositiveQ(q)
    k = Kernels(model, refraction, q)
    b, delta, phi, Phi = k.b, k.delta, k.phi, k.Phi
    scaled = k.E(x, b) * (phi - Phi) / (delta * Phi)

    def Density(y):
        if y >= b:
            return scaled * math.exp(-phi * (y - b)) - k.WW.W(x - y)
        return scaled * k.DeltaShift(b - y) - k.H(x, y)

    return ResolventDensity("free", x, q, -math.inf, math.inf, Density, (b,))


def Resolvent(
    model: levy.LevyModel,
    refraction: levy.RefractionConfig,
    kind: str,
    x: float,
    q: float,
    a: float | None = None,
) -> ResolventDensity:
    if kind == "two_sided":
        return ResolventTwoSided(model, ExitQuery(x=x, a=a, q=q, refraction=refraction))
    if kind == "killed_below":
        return ResolventKilledBelow(model, refraction, x, q)
    if kind == "killed_above":
        return ResolventKilledAbove(model, refraction, x, a, q)
    if kind == "free":
        return ResolventFree(model, refraction, x, q)
    raise errors.InvalidQuery(f"unknown resolvent kind {kind!r}")


def Creeping(
    model: levy.LevyModel, refraction: levy.RefractionConfig, x: float, q: float
) -> IdentityResult:
    """E_x[e^{-q kappa_0^-}; U at kappa_0^- equal to 0]; zero without a Gaussian part.

    q = 0 gives the creeping probability as the q -> 0 limit.
    """
    if q < 0:
        raise errors.NonpositiveQ(q)
    levy.ValidateRefraction(model, refraction)
    if model.sigma == 0 or x < 0:
        return _Result(0.0)
    k = Kernels(model, refraction, q)
    b, delta = k.b, k.delta

    # int_b^x WW(x-z) W''(z) dz by parts; WW(0) = 0 when sigma > 0.
    convolution = 0.0
    if x > b:
        convolution = -k.WW.W(x - b) * k.W.Eval(b, 1) + k._Quad(
            lambda z: k.WW.Eval(x - z, 1) * k.W.Eval(z, 1), b, x
        )
    ratio = k.phi - delta * k.W.Eval(b, 1) / k.DeltaShift(b)
    value = 0.5 * model.sigma**2 * (
        k.W.Eval(x, 1) + delta * convolution - ratio * k.N(x)
    )
    return _Result(value, k, "limit" if q == 0 else None)


def _KeyInner(model: levy.LevyModel, w: scale.HyperExpScale, m: float):
    """z -> int_(z, inf) W(z - theta + m) Pi(d theta) for hyper-exponential Pi."""
    jumps = model.jumps
    lam = jumps.intensity
    A, alpha = np.array(jumps.weights), np.array(jumps.rates)
    th, d = w.roots, w.coefficients
    # sum_i D_i int_0^m e^{(theta_i + alpha_k) s} ds, one entry per k
    inner = np.sum(
        d[None, :] * m * special.exprel(np.add.outer(alpha, th) * m), axis=1
    )

    def Inner(z: float) -> float:
        return float(lam * np.sum(A * alpha * np.exp(-alpha * (z + m)) * inner))

    return Inner


def VerifyKeyIdentity(
    model: levy.LevyModel,
    refraction: levy.RefractionConfig,
    q: float,
    u: float,
    v: float,
    m: float,
) -> float:
    """|LHS - RHS| of the jump-integral identity linking W, WW at levels u <= v above m."""
    if not model.BoundedVariation() or isinstance(model.jumps, levy.NoJumps):
        raise errors.ModelDomainError(
            "key identity needs hyper-exponential jumps and sigma = 0"
        )
    if not v >= u > m >= 0:
        raise errors.InvalidQuery(f"need v >= u > m >= 0, got u={u}, v={v}, m={m}")
    k = Kernels(model, refraction, q)
    W, WW, delta = k.W, k.WW, k.delta
    inner = _KeyInner(model, W, m)

    ratio = WW.W(u - m) / WW.W(v - m)

    def Bracket(z):
        return inner(z) * (WW.W(v - m - z) * ratio - WW.W(u - m - z))

    lhs = k._Quad(Bracket, 0.0, v - m, points=(u - m,))

    def Refracted(x):
        return W.W(x) + delta * k._Quad(
            lambda z: WW.W(x - z) * W.Eval(z, 1), m, x
        )

    rhs = -ratio * Refracted(v) + Refracted(u)
    return abs(lhs - rhs)


def ConvolutionResidual(
    model: levy.LevyModel, delta: float, q: float, a: float
) -> float:
    """|delta int_0^a WW(a-y) W(y) dy - int_0^a WW + int_0^a W|."""
    W = scale.Build(model, 0.0, q)
    WW = scale.Build(model, delta, q)
    conv, _ = util.Quad(lambda y: WW.W(a - y) * W.W(y), 0.0, a)
    return abs(delta * conv - WW.Integral(a) + W.Integral(a))


def ClassicalTwoSided(model: levy.LevyModel, x: float, a: float, q: float) -> float:
    """E_x[e^{-q tau_a^+}; tau_a^+ < tau_0^-] = W(x)/W(a) for X."""
    if not 0 <= x <= a:
        raise errors.InvalidQuery(f"need 0 <= x <= a, got x={x}, a={a}")
    if x == a:
        return 1.0
    w = scale.Build(model, 0.0, q)
    return w.W(x) / w.W(a)


def ClassicalResolvent(
    model: levy.LevyModel, x: float, a: float, q: float
) -> ResolventDensity:
    """Resolvent density W(x) W(a-y)/W(a) - W(x-y) of X killed outside [0, a]."""
    if not 0 <= x <= a:
        raise errors.InvalidQuery(f"need 0 <= x <= a, got x={x}, a={a}")
    w = scale.Build(model, 0.0, q)
    ratio = w.W(x) / w.W(a)
    return ResolventDensity(
        "classical", x, q, 0.0, a, lambda y: ratio * w.W(a - y) - w.W(x - y)
    )


def ClassicalOvershoot(
    model: levy.LevyModel,
    x: float,
    a: float,
    q: float,
    f: Callable[[float], float],
    g: Callable[[float], float],
) -> float:
    """E_x[e^{-q tau_0^-} f(X at tau_0^-) g(X just before); tau_0^- < tau_a^+]."""
    if not (model.BoundedVariation() or f(0.0) * g(0.0) == 0):
        raise errors.InvalidQuery("needs bounded variation or f(0) g(0) = 0")
    density = ClassicalResolvent(model, x, a, q)

    def Jump(y):
        inner, _ = util.Quad(
            lambda th: f(y - th) * float(model.LevyDensity(th)), y, math.inf
        )
        return inner * g(y) * density._Scalar(y)

    value, _ = util.Quad(Jump, 0.0, a, points=(x,))
    return value


def ClassicalOneSidedDown(model: levy.LevyModel, x: float, q: float) -> float:
    """E_x[e^{-q tau_0^-}; tau_0^- < infinity] = Z(x) - q W(x) / Phi(q) for X."""
    _RequirePositiveQ(q)
    w = scale.Build(model, 0.0, q)
    return w.Z(x) - q / w.phi * w.W(x)


def ClassicalResolventKilledBelow(
    model: levy.LevyModel, x: float, q: float
) -> ResolventDensity:
    """Resolvent density e^{-Phi y} W(x) - W(x-y) of X killed below 0."""
    _RequirePositiveQ(q)
    w = scale.Build(model, 0.0, q)
    wx = w.W(x)
    return ResolventDensity(
        "classical_killed_below",
        x,
        q,
        0.0,
        math.inf,
        lambda y: math.exp(-w.phi * y) * wx - w.W(x - y),
    )


def ClassicalResolventFree(
    model: levy.LevyModel, x: float, q: float
) -> ResolventDensity:
    """Resolvent density Phi'(q) e^{-Phi (y-x)} - W(x-y) of X."""
    _RequirePositiveQ(q)
    w = scale.Build(model, 0.0, q)
    slope = 1.0 / float(model.LaplaceExponentDeriv(w.phi))
    return ResolventDensity(
        "classical_free",
        x,
        q,
        -math.inf,
        math.inf,
        lambda y: slope * math.exp(-w.phi * (y - x)) - w.W(x - y),
        (x,),
    )
