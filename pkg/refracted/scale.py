"""Scale functions W^{(q)} and Z^{(q)} of X - delta t."""

from typing import Callable
import functools
import logging
import math

import numpy as np
import pandas as pd
import pydantic
from scipy import optimize, special

from refracted import config as config_lib
from refracted import errors
from refracted import inversion
from refracted import levy
from refracted import util
from refracted.special import MittagLeffler


def _Out(arr):
    arr = np.asarray(arr, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


class HyperExpClosedForm(pydantic.BaseModel):
    """W(x) = sum_i D_i e^{theta_i x}; roots[0] is the right inverse phi."""

    model_config = pydantic.ConfigDict(frozen=True)

    roots: tuple[float, ...]
    coefficients: tuple[float, ...]


class ScaleFunction(object):
    """Scale function of Y = X - delta t at discount q.

    Subclasses provide _Eval(x, order, rate) = e^{-rate x} W^{(order)}(x) and
    _Integral(x) on 1-d arrays of strictly positive x.
    """

    method = ""

    def __init__(self, model: levy.LevyModel, delta: float, q: float):
        if q < 0:
            raise errors.InvalidQuery(f"q must be >= 0, got {q}", q=q)
        self.model = model
        self.delta = delta
        self.q = q
        if q == 0 and model.Mean() - delta == 0:
            raise errors.DegenerateDrift(
                f"q=0 with E(X_1) - delta = 0 (delta={delta}); use a small q > 0",
                delta=delta,
            )
        self.phi = model.PhiInverse(delta, q)
        self.w0 = 1.0 / (model.c - delta) if model.BoundedVariation() else 0.0

    def HasSecondDerivative(self) -> bool:
        return True

    def _DerivAtZero(self) -> float:
        """W'(0+)."""
        if self.model.sigma > 0:
            return 2.0 / self.model.sigma**2
        if self.model.BoundedVariation():
            jumps = float(self.model.JumpTail(0.0))
            return (jumps + self.q) / (self.model.c - self.delta) ** 2
        return math.inf

    def _AtZero(self, order: int) -> float:
        if order == 0:
            return self.w0
        if order == 1:
            return self._DerivAtZero()
        raise NotImplementedError

    def Eval(self, x, order: int = 0, rate: float = 0.0):
        """e^{-rate x} W^{(order)}(x); right limits at 0 and zero for x < 0."""
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        out = np.zeros_like(flat)
        pos = flat > 0
        if np.any(pos):
            out[pos] = self._Eval(flat[pos], order, rate)
        if np.any(flat == 0):
            out[flat == 0] = self._AtZero(order)
        return _Out(out.reshape(x.shape))

    def W(self, x):
        return self.Eval(x)

    def WDeriv(self, x, order: int = 1):
        assert order in (1, 2), order
        if order == 2 and not self.HasSecondDerivative():
            raise errors.SecondDerivativeUnavailable(
                "W'' needs a Gaussian component or a closed form",
                sigma=self.model.sigma,
            )
        return self.Eval(x, order)

    def Integral(self, x):
        """int_0^x W(y) dy, zero for x <= 0."""
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        out = np.zeros_like(flat)
        pos = flat > 0
        if np.any(pos):
            out[pos] = self._Integral(flat[pos])
        return _Out(out.reshape(x.shape))

    def Z(self, x):
        if self.q == 0:
            return _Out(np.ones_like(np.asarray(x, dtype=float)))
        return _Out(1.0 + self.q * np.asarray(self.Integral(x)))

    def Transform(self, beta: float) -> float:
        """int_0^inf e^{-beta x} W(x) dx for beta > phi."""
        return 1.0 / (
            float(self.model.LaplaceExponent(beta)) - self.delta * beta - self.q
        )

    def LaplaceShift(self, rate: float, shift: float = 0.0, order: int = 0) -> float:
        """int_0^inf e^{-rate v} W^{(order)}(v + shift) dv for rate > phi."""
        assert rate > self.phi, (rate, self.phi)
        assert shift >= 0, shift
        if shift == 0 and order == 0:
            return self.Transform(rate)
        if shift == 0 and order == 1:
            return rate * self.Transform(rate) - self.w0

        length = -math.log(config_lib.NUMERICS.tail_tol) / (rate - self.phi)

        def Integrand(v):
            return math.exp(-rate * v) * self.Eval(v + shift, order)

        # Tilt by phi so the integrand stays bounded.
        def Tilted(v):
            return self.Eval(v + shift, order, rate) * math.exp(rate * shift)

        f = Tilted if rate * shift < 700 else Integrand
        value, _ = util.Quad(f, 0.0, length)
        return value

    def Table(self, x_max: float, mesh: int, second_derivative: bool = False):
        """W, W', Z (and optionally W'') on a uniform mesh of [0, x_max]."""
        x = np.linspace(0.0, x_max, mesh)
        table = pd.DataFrame(
            dict(x=x, W=self.Eval(x), Wprime=self.Eval(x, 1), Z=self.Z(x))
        )
        if second_derivative:
            table["Wsecond"] = self.WDeriv(x, 2)
        return table

    def _Eval(self, x: np.ndarray, order: int, rate: float) -> np.ndarray:
        raise NotImplementedError

    def _Integral(self, x: np.ndarray) -> np.ndarray:
        return util.Vectorize(lambda v: util.Quad(self.W, 0.0, v)[0])(x)


class HyperExpScale(ScaleFunction):
    """Partial fraction form for hyper-exponential (or no) jumps."""

    method = "closed_form"

    def __init__(self, model: levy.LevyModel, delta: float, q: float):
        super().__init__(model, delta, q)
        self.closed_form = _PartialFractions(model, delta, q, self.phi)
        self.roots = np.array(self.closed_form.roots)
        self.coefficients = np.array(self.closed_form.coefficients)

    def _AtZero(self, order: int) -> float:
        return float(np.sum(self.coefficients * self.roots**order))

    def _Eval(self, x, order, rate):
        th, d = self.roots, self.coefficients
        expo = np.outer(x, th) - rate * x[:, None]
        return np.sum(d * th**order * np.exp(expo), axis=-1)

    def _Integral(self, x):
        th, d = self.roots, self.coefficients
        return np.sum(d * x[:, None] * special.exprel(np.outer(x, th)), axis=-1)

    def LaplaceShift(self, rate: float, shift: float = 0.0, order: int = 0) -> float:
        assert rate > self.phi, (rate, self.phi)
        th, d = self.roots, self.coefficients
        return float(np.sum(d * th**order * np.exp(th * shift) / (rate - th)))


class StableScale(ScaleFunction):
    """W(x) = (1 - E_beta(-c x^beta)) / c with c = c - delta, beta = alpha - 1; q = 0."""

    method = "closed_form"

    def __init__(self, model: levy.LevyModel, delta: float, q: float = 0.0):
        assert q == 0 and model.sigma == 0, (q, model.sigma)
        super().__init__(model, delta, q)
        self.alpha = model.jumps.alpha
        self.beta = self.alpha - 1
        self.drift = model.c - delta
        assert self.drift > 0, self.drift

    def _AtZero(self, order: int) -> float:
        return [0.0, math.inf, -math.inf][order]

    def _Eval(self, x, order, rate):
        b, c = self.beta, self.drift
        z = -c * x**b
        if order == 0:
            value = (1.0 - MittagLeffler(b, z)) / c
        elif order == 1:
            value = b * x ** (b - 1) * MittagLeffler(b, z, 1)
        else:
            value = b * (b - 1) * x ** (b - 2) * MittagLeffler(
                b, z, 1
            ) - c * b**2 * x ** (2 * b - 2) * MittagLeffler(b, z, 2)
        return np.asarray(value) * np.exp(-rate * x)


class TabulatedScale(ScaleFunction):
    """Fixed Talbot inversion of the tilted transform 1/(psi(s+phi) - delta(s+phi) - q).

    W(x) = e^{phi x} W_phi(x) where W_phi is bounded, so the inversion is well
    conditioned. W'' is a centered difference of W' with step h.
    """

    method = "inversion"

    def __init__(self, model, delta, q, h: float = 1e-3):
        super().__init__(model, delta, q)
        self.h = h
        self.table = None
        logging.info(
            f"Inverting scale function: delta={delta} q={q} phi={self.phi:.6g}"
        )

    def HasSecondDerivative(self) -> bool:
        return self.model.sigma > 0

    def _Tilted(self, s):
        p = s + self.phi
        return 1.0 / (self.model.LaplaceExponent(p) - self.delta * p - self.q)

    def _Invert(self, transform: Callable, x: np.ndarray) -> np.ndarray:
        num = config_lib.NUMERICS
        primary = inversion.FixedTalbot(transform, x, num.talbot_nodes)
        check = inversion.FixedTalbot(transform, x, num.talbot_check_nodes)
        diff = np.abs(primary - check) / np.maximum(1.0, np.abs(primary))
        worst = int(np.argmax(diff))
        if diff[worst] > num.inversion_tol:
            raise errors.InversionError(
                f"Talbot inversion error {diff[worst]:.3g} exceeds {num.inversion_tol}",
                x=float(x[worst]),
                estimate=float(diff[worst]),
                nodes=num.talbot_nodes,
                check_nodes=num.talbot_check_nodes,
            )
        return primary

    def _TiltedW(self, x):
        return self._Invert(self._Tilted, x)

    def _TiltedWDeriv(self, x):
        # L[W_phi'](s) = s G(s) - W(0)
        deriv = self._Invert(lambda s: s * self._Tilted(s) - self.w0, x)
        return deriv + self.phi * self._TiltedW(x)

    def _SecondDiff(self, x):
        h = self.h
        f = lambda v: self._Eval(v, 1, 0.0)
        out = np.empty_like(x)
        inner = x > h
        if np.any(inner):
            xi = x[inner]
            out[inner] = (f(xi + h) - f(xi - h)) / (2 * h)
        if np.any(~inner):
            xe = x[~inner]
            out[~inner] = (-3 * f(xe) + 4 * f(xe + h) - f(xe + 2 * h)) / (2 * h)
        return out

    def _AtZero(self, order: int) -> float:
        if order < 2:
            return super()._AtZero(order)
        h = self.h
        pts = self._Eval(np.array([h, 2 * h]), 1, 0.0)
        return float((-3 * self._DerivAtZero() + 4 * pts[0] - pts[1]) / (2 * h))

    def _Eval(self, x, order, rate):
        tilt = np.exp((self.phi - rate) * x)
        if order == 0:
            return tilt * self._TiltedW(x)
        if order == 1:
            return tilt * self._TiltedWDeriv(x)
        return np.exp(-rate * x) * self._SecondDiff(x)

    def _Integral(self, x):
        # e^{-phi x} int_0^x W has transform G(s) / (s + phi)
        tilted = self._Invert(lambda s: self._Tilted(s) / (s + self.phi), x)
        return np.exp(self.phi * x) * tilted

    def Table(self, x_max: float, mesh: int, second_derivative: bool = False):
        x = np.linspace(0.0, x_max, mesh)
        h = x[1] - x[0]
        w = self.Eval(x)
        wp = self.Eval(x, 1)
        table = pd.DataFrame(dict(x=x, W=w, Wprime=wp, Z=self.Z(x)))
        if second_derivative:
            if not self.HasSecondDerivative():
                raise errors.SecondDerivativeUnavailable(
                    "W'' needs a Gaussian component or a closed form",
                    sigma=self.model.sigma,
                )
            table["Wsecond"] = np.gradient(wp, h, edge_order=2)
        return table


def _Bracket(f, lo: float, hi: float) -> float:
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise errors.RootSeparationFailure(
            f"no sign change on [{lo}, {hi}]: roots too close to a pole"
        )
    return optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _Offset(p: float) -> float:
    return 1e-9 * max(1.0, abs(p))


def _PartialFractions(
    model: levy.LevyModel, delta: float, q: float, phi: float
) -> HyperExpClosedForm:
    jumps = model.jumps
    rates = [] if isinstance(jumps, levy.NoJumps) else list(jumps.rates)
    poles = sorted((-a for a in rates), reverse=True)
    mean = model.Mean() - delta

    def f(th):
        return float(model.LaplaceExponent(th)) - delta * th - q

    def g(th):
        # f / theta with the root at 0 removed
        if th == 0:
            return float(model.LaplaceExponentDeriv(0.0)) - delta
        return f(th) / th

    def Left(p: float) -> float:
        lo = p - 1.0
        while f(lo) <= 0:
            lo = p - 2 * (p - lo)
        return lo

    roots = [phi]
    diffusive = model.sigma > 0

    # The root in (p_1, 0), or (-inf, 0) without jumps.
    if poles or diffusive:
        lo = poles[0] + _Offset(poles[0]) if poles else None
        if q > 0:
            roots.append(_Bracket(f, lo if lo is not None else Left(0.0), 0.0))
        elif mean > 0:
            if lo is None:
                lo = -1.0
                while g(lo) >= 0:
                    lo *= 2
            roots.append(_Bracket(g, lo, 0.0))
        else:
            roots.append(0.0)

    for right, left in zip(poles[:-1], poles[1:]):
        roots.append(_Bracket(f, left + _Offset(left), right - _Offset(right)))

    if diffusive and poles:
        last = poles[-1]
        roots.append(_Bracket(f, Left(last), last - _Offset(last)))

    ordered = sorted(roots)
    gaps = np.diff(ordered)
    if len(gaps) and np.min(gaps) < 1e-10:
        raise errors.RootSeparationFailure(
            f"roots {ordered} coincide within 1e-10", roots=ordered
        )

    coefficients = [
        1.0 / (float(model.LaplaceExponentDeriv(th)) - delta) for th in roots
    ]
    return HyperExpClosedForm(roots=tuple(roots), coefficients=tuple(coefficients))


def _HasRationalExponent(model: levy.LevyModel) -> bool:
    return not isinstance(model.jumps, levy.StableJumps)


@functools.lru_cache(maxsize=256)
def Build(
    model: levy.LevyModel, delta: float = 0.0, q: float = 0.0, method: str = "auto"
) -> ScaleFunction:
    """Closed form where one exists, Talbot inversion otherwise."""
    assert method in ("auto", "inversion"), method
    if method == "inversion":
        return TabulatedScale(model, delta, q)
    if _HasRationalExponent(model):
        return HyperExpScale(model, delta, q)
    if q == 0 and model.sigma == 0 and model.c - delta > 0:
        return StableScale(model, delta, q)
    return TabulatedScale(model, delta, q)


def ScaleW(model: levy.LevyModel, q: float, x):
    return Build(model, 0.0, q).W(x)


def ScaleZ(model: levy.LevyModel, q: float, x):
    return Build(model, 0.0, q).Z(x)


def ScaleWDeriv(model: levy.LevyModel, q: float, x, order: int = 1):
    return Build(model, 0.0, q).WDeriv(x, order)


def RefractedScale(
    model: levy.LevyModel,
    refraction: levy.RefractionConfig,
    q: float,
    x,
    order: int = 0,
):
    """Scale function WW^{(q)} of Y = X - delta t (or its derivative)."""
    if refraction.delta != 0:
        levy.ValidateRefraction(model, refraction)
    scale = Build(model, refraction.delta, q)
    return scale.W(x) if order == 0 else scale.WDeriv(x, order)


def HyperExpPartialFractions(
    model: levy.LevyModel, delta: float, q: float
) -> HyperExpClosedForm:
    if not _HasRationalExponent(model):
        raise errors.ModelDomainError(
            "partial fractions need hyper-exponential jumps or none"
        )
    scale = Build(model, delta, q)
    assert isinstance(scale, HyperExpScale)
    return scale.closed_form


def InvertLaplaceScale(
    model: levy.LevyModel,
    delta: float,
    q: float,
    x_max: float,
    mesh: int = config_lib.NUMERICS.mesh,
    second_derivative: bool = False,
) -> TabulatedScale:
    """Talbot-inverted scale function with its mesh table attached."""
    if not x_max > 0:
        raise errors.InvalidQuery(f"x_max must be > 0, got {x_max}", x_max=x_max)
    if mesh < 64:
        raise errors.InvalidQuery(f"mesh must be >= 64, got {mesh}", mesh=mesh)
    h = x_max / (mesh - 1)
    scale = TabulatedScale(model, delta, q, h=h)
    scale.table = scale.Table(x_max, mesh, second_derivative)
    return scale


def DefaultXMax(scale: ScaleFunction, extent: float, b: float = 0.0) -> float:
    """max(3 extent, b + 20/phi, 1) for tabulating around a query."""
    tail = 20.0 / scale.phi if scale.phi > 0 else 0.0
    return max(3.0 * extent, b + tail, 1.0)
