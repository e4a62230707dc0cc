"""One-parameter Mittag-Leffler function on the negative half line."""

import math

import numpy as np
from scipy import special

from refracted import config as config_lib
from refracted import errors
from refracted import util


def _Series(beta: float, z: float, deriv: int, tol: float) -> float:
    # d^k/dz^k sum_n z^n / Gamma(beta n + 1)
    total = 0.0
    for n in range(deriv, 5000):
        falling = math.perm(n, deriv)
        term = falling * z ** (n - deriv) * special.rgamma(beta * n + 1)
        total += term
        if n > deriv + 2 and abs(term) < tol * max(1.0, abs(total)):
            return total
    raise errors.NumericalError(f"Mittag-Leffler series did not converge at z={z}")


def _Integral(beta: float, x: float, deriv: int) -> float:
    # E_beta(-x) = sin(beta pi)/(pi beta)
    #     * int_0^inf exp(-(x u)^{1/beta}) / (u^2 + 2u cos(beta pi) + 1) du
    k = math.sin(beta * math.pi) / (math.pi * beta)
    cos = math.cos(beta * math.pi)

    def Integrand(u: float) -> float:
        log_s = math.log(x * u) / beta if u > 0 else -math.inf
        if log_s > 7.0:
            # e^{-s} underflows; (x u)^{1/beta} itself may overflow for small beta.
            return 0.0
        s = math.exp(log_s)
        kernel = math.exp(-s) / (u * u + 2 * u * cos + 1)
        if deriv == 0:
            return kernel
        if deriv == 1:
            return kernel * s / (beta * x)
        return kernel * (s * s / (beta * x) ** 2 - s * (1 / beta - 1) / (beta * x * x))

    value, _ = util.Quad(
        Integrand, 0.0, np.inf, points=(1.0, 2.0), epsabs=1e-13, epsrel=1e-12
    )
    return k * value


def _MittagLefflerScalar(beta: float, z: float, deriv: int) -> float:
    num = config_lib.NUMERICS
    if not 0 < beta < 1:
        raise errors.ModelDomainError(
            f"Mittag-Leffler index must be in (0, 1), got {beta}"
        )
    if z > 0:
        raise errors.ModelDomainError(f"Mittag-Leffler argument must be <= 0, got {z}")
    if abs(z) <= num.ml_switch_radius:
        return _Series(beta, z, deriv, num.ml_series_tol)
    return _Integral(beta, -z, deriv)


def MittagLeffler(beta: float, z, deriv: int = 0):
    """E_beta(z) (or its first/second derivative) for 0 < beta < 1 and z <= 0."""
    assert deriv in (0, 1, 2), deriv
    return util.Vectorize(lambda v: _MittagLefflerScalar(beta, float(v), deriv))(z)
