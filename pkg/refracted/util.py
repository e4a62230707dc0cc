"""Shared numerical and output utilities."""

from typing import Callable, Iterable
import json
import math
import warnings

import numpy as np
from scipy import integrate

from refracted import config as config_lib
from refracted import errors


def Quad(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    points: Iterable[float] = (),
    **kwargs,
) -> tuple[float, float]:
    """Integrate f over [lo, hi] split at interior points; returns (value, abserr)."""
    if lo == hi:
        return 0.0, 0.0
    sign = 1.0
    if lo > hi:
        lo, hi, sign = hi, lo, -1.0
    cuts = sorted(set(p for p in points if lo < p < hi))
    edges = [lo] + cuts + [hi]
    total, err = 0.0, 0.0
    for left, right in zip(edges[:-1], edges[1:]):
        v, e = _QuadPiece(f, left, right, **kwargs)
        total += v
        err += e
    return sign * total, err


def _QuadPiece(f, lo, hi, **kwargs) -> tuple[float, float]:
    num = config_lib.NUMERICS
    opts = dict(
        epsabs=num.quad_epsabs, epsrel=num.quad_epsrel, limit=num.quad_limit
    )
    opts.update(kwargs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(f, lo, hi, full_output=1, **opts)
    value, err = out[0], out[1]
    if not math.isfinite(value):
        raise errors.QuadratureError(f"non-finite integral on [{lo}, {hi}]")
    if len(out) > 3 and err > num.quad_fail_tol * max(1.0, abs(value)):
        raise errors.QuadratureError(
            f"quadrature on [{lo}, {hi}] failed: {out[3]}", abserr=err, value=value
        )
    return value, err


def Vectorize(fn: Callable[[float], float]):
    """Elementwise float map returning a float for scalar input."""
    vec = np.vectorize(fn, otypes=[float])

    def Apply(x):
        out = vec(x)
        return float(out) if np.ndim(out) == 0 else out

    return Apply


def _Finite(obj):
    if isinstance(obj, dict):
        return {k: _Finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_Finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def ToJson(record) -> str:
    """Deterministic JSON: keys in insertion order, non-finite floats as null."""
    return json.dumps(_Finite(record), indent=2)


CSV_FLOAT_FORMAT = "%.17g"
