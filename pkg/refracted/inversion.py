"""Fixed Talbot numerical Laplace inversion."""

from typing import Callable

import numpy as np


def FixedTalbot(
    transform: Callable[[np.ndarray], np.ndarray], times, nodes: int = 32
) -> np.ndarray:
    """Invert transform at each t > 0 with an M-node fixed Talbot contour.

    transform must accept a complex array of any shape. The contour for time t
    is p_k = r theta_k (cot theta_k + i) / t with theta_k = k pi / M and
    r = 2M/5; singularities must lie on the negative real axis.
    """
    t = np.atleast_1d(np.asarray(times, dtype=float))
    assert np.all(t > 0), "Talbot inversion needs t > 0"
    r = 2.0 * nodes / 5.0
    theta = np.arange(nodes) * np.pi / nodes
    cot = np.zeros(nodes)
    cot[1:] = 1.0 / np.tan(theta[1:])

    # (len(t), nodes)
    shape = r * theta * (cot + 1j)
    shape[0] = r
    p = shape[None, :] / t[:, None]

    gamma = np.exp(shape) * (1 + 1j * theta * (1 + cot**2) - 1j * cot)
    gamma[0] = 0.5 * np.exp(r)

    values = transform(p)
    return 2.0 / (5.0 * t) * np.real(values @ gamma)
