import math
import numpy as np
import unittest

from refracted import config
from refracted import inversion


class TestFixedTalbot(unittest.TestCase):
    def test_known_pairs(self):
        t = np.array([0.05, 0.5, 1.0, 4.0, 10.0])
        np.testing.assert_allclose(
            np.exp(-t), inversion.FixedTalbot(lambda s: 1 / (s + 1), t), rtol=1e-9
        )
        np.testing.assert_allclose(
            t, inversion.FixedTalbot(lambda s: 1 / s**2, t), rtol=1e-9
        )
        # Branch point at 0: t^{-1/2}
        np.testing.assert_allclose(
            1 / np.sqrt(np.pi * t),
            inversion.FixedTalbot(lambda s: 1 / np.sqrt(s), t),
            rtol=1e-9,
        )

    def test_fewer_nodes_agree(self):
        t = np.linspace(0.1, 5.0, 20)
        f = lambda s: 1 / (s + 0.5) ** 2
        np.testing.assert_allclose(
            inversion.FixedTalbot(f, t, 32), inversion.FixedTalbot(f, t, 24), rtol=1e-8
        )

    def test_stable_range_power_laws(self):
        # s^{-alpha} inverts to t^{alpha-1} / Gamma(alpha) for alpha across (1, 2).
        num = config.NUMERICS
        t = np.array([1e-3, 0.1, 1.0, 10.0, 100.0])
        for alpha in [1.01, 1.5, 1.99]:
            expected = t ** (alpha - 1) / math.gamma(alpha)
            primary = inversion.FixedTalbot(
                lambda s: s ** (-alpha), t, num.talbot_nodes
            )
            check = inversion.FixedTalbot(
                lambda s: s ** (-alpha), t, num.talbot_check_nodes
            )
            np.testing.assert_allclose(expected, primary, rtol=1e-8)
            np.testing.assert_allclose(primary, check, rtol=num.inversion_tol)

    def test_requires_positive_time(self):
        with self.assertRaises(AssertionError):
            inversion.FixedTalbot(lambda s: 1 / s, [0.0, 1.0])


if __name__ == "__main__":
    unittest.main()
