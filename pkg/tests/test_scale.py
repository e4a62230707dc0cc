import math
import numpy as np
import unittest
from scipy import special

from refracted import config
from refracted import errors
from refracted import levy
from refracted import scale
from refracted import util


M1 = config.Get("M1").Model()
M2 = config.Get("M2").Model()
M3 = config.Get("M3").Model()


def AssertRelativeClose(test, expected, got, tol=1e-6):
    expected, got = np.asarray(expected), np.asarray(got)
    worst = np.max(np.abs(expected - got) / np.maximum(1.0, np.abs(expected)))
    test.assertLessEqual(worst, tol)


class TestHyperExpScale(unittest.TestCase):
    def test_cramer_lundberg(self):
        # c=2, lambda=1, Exp(1) claims: W(x) = 1 - e^{-x/2} / 2
        x = np.array([0.0, 0.5, 1.0, 3.0, 10.0])
        W, Wprime = scale.ScaleW(M1, 0.0, x), scale.ScaleWDeriv(M1, 0.0, x)
        np.testing.assert_allclose(1 - 0.5 * np.exp(-0.5 * x), W, rtol=1e-13)
        np.testing.assert_allclose(0.25 * np.exp(-0.5 * x), Wprime, rtol=1e-13)
        np.testing.assert_array_equal(np.ones_like(x), scale.ScaleZ(M1, 0.0, x))
        np.testing.assert_allclose(
            x - 1 + np.exp(-0.5 * x),
            scale.Build(M1).Integral(x),
            rtol=1e-12,
            atol=1e-15,
        )
        closed = scale.HyperExpPartialFractions(M1, 0.0, 0.0)
        np.testing.assert_allclose([0.0, -0.5], closed.roots, atol=1e-12)
        np.testing.assert_allclose([1.0, -0.5], closed.coefficients, rtol=1e-10)

    def test_refracted_scale(self):
        # X - 0.5 t: WW(x) = 2 - (4/3) e^{-x/3}
        refraction = levy.RefractionConfig(delta=0.5, b=1.0)
        x = np.array([0.0, 1.0, 4.0])
        np.testing.assert_allclose(
            2 - 4 / 3 * np.exp(-x / 3),
            scale.RefractedScale(M1, refraction, 0.0, x),
            rtol=1e-13,
        )
        np.testing.assert_allclose(
            4 / 9 * np.exp(-x / 3),
            scale.RefractedScale(M1, refraction, 0.0, x, order=1),
            rtol=1e-12,
        )
        with self.assertRaises(errors.HypothesisHViolation):
            scale.RefractedScale(M1, levy.RefractionConfig(delta=2.5), 0.0, 1.0)

    def test_discounted_roots(self):
        # psi(theta) = 1 gives 2 theta^2 = 1; D_i = 1 / psi'(theta_i)
        closed = scale.HyperExpPartialFractions(M1, 0.0, 1.0)
        roots = np.array([1, -1]) / math.sqrt(2)
        np.testing.assert_allclose(roots, closed.roots, rtol=1e-12)
        np.testing.assert_allclose(
            1 / M1.LaplaceExponentDeriv(roots), closed.coefficients, rtol=1e-12
        )
        w = scale.Build(M1, 0.0, 1.0)
        self.assertAlmostEqual(0.5, w.W(0.0), places=14)
        # W'(0+) = (lambda + q) / c^2
        self.assertAlmostEqual(0.5, w.WDeriv(0.0), places=12)

    def test_gaussian_part(self):
        w = scale.Build(M2, 0.0, 0.5)
        self.assertEqual(0.0, w.W(0.0))
        self.assertAlmostEqual(2.0, w.WDeriv(0.0), places=12)
        self.assertEqual(3, len(w.roots))
        # W'' from the closed form matches a difference of W'.
        h = 1e-5
        numeric = (w.WDeriv(1.0 + h) - w.WDeriv(1.0 - h)) / (2 * h)
        self.assertAlmostEqual(numeric, w.WDeriv(1.0, 2), places=6)

    def test_brownian_motion(self):
        # psi = c theta + theta^2 / 2, q = 0: W(x) = (1 - e^{-2 c x}) / c
        model = levy.LevyModel(c=1.5, sigma=1.0)
        x = np.array([0.1, 1.0, 3.0])
        expected = (1 - np.exp(-3.0 * x)) / 1.5
        np.testing.assert_allclose(expected, scale.ScaleW(model, 0.0, x), rtol=1e-12)

    def test_laplace_shift(self):
        w = scale.Build(M1, 0.0, 0.5)
        for shift, order in [(0.0, 0), (0.0, 1), (1.5, 0), (1.5, 1)]:
            closed = w.LaplaceShift(1.0, shift, order)
            generic = scale.ScaleFunction.LaplaceShift(w, 1.0, shift, order)
            self.assertAlmostEqual(closed, generic, places=8)

    def test_transform_round_trip(self):
        for model in [M1, M2]:
            for q in [0.1, 0.5, 1.0]:
                w = scale.Build(model, 0.0, q)
                for beta in [w.phi + 0.5, 2.0, 5.0]:
                    value, _ = util.Quad(
                        lambda x: math.exp(-beta * x) * w.W(x), 0.0, math.inf
                    )
                    expected = 1 / (model.LaplaceExponent(beta) - q)
                    self.assertAlmostEqual(expected, value, delta=1e-5)

    def test_negative_argument(self):
        w = scale.Build(M1)
        self.assertEqual(0.0, w.W(-1.0))
        np.testing.assert_array_equal([0.0, 0.0], w.Eval(np.array([-2.0, -0.1]), 1))


class TestInvertedScale(unittest.TestCase):
    def test_matches_closed_form(self):
        x = np.array([0.01, 0.5, 2.0, 10.0, 20.0])
        for model in [M1, M2]:
            for q in [0.0, 0.5]:
                closed = scale.Build(model, 0.0, q)
                inverted = scale.Build(model, 0.0, q, method="inversion")
                AssertRelativeClose(self, closed.W(x), inverted.W(x))
                AssertRelativeClose(self, closed.WDeriv(x), inverted.WDeriv(x))
                AssertRelativeClose(self, closed.Z(x), inverted.Z(x))

    def test_mesh_table(self):
        inverted = scale.InvertLaplaceScale(M1, 0.0, 0.5, x_max=20.0, mesh=4096)
        table = inverted.table
        self.assertEqual(["x", "W", "Wprime", "Z"], list(table.columns))
        self.assertEqual(4096, len(table))
        closed = scale.Build(M1, 0.0, 0.5)
        AssertRelativeClose(self, closed.W(table.x.values), table.W.values)

    def test_second_derivative_table(self):
        inverted = scale.InvertLaplaceScale(
            M2, 0.0, 0.5, x_max=5.0, mesh=501, second_derivative=True
        )
        x = inverted.table.x.values[1:-1]
        closed = scale.Build(M2, 0.0, 0.5).WDeriv(x, 2)
        tabulated = inverted.table.Wsecond.values[1:-1]
        np.testing.assert_allclose(closed, tabulated, atol=5e-3)

    def test_second_derivative_unavailable(self):
        inverted = scale.Build(M1, 0.0, 0.5, method="inversion")
        with self.assertRaises(errors.SecondDerivativeUnavailable):
            inverted.WDeriv(1.0, 2)
        with self.assertRaises(errors.SecondDerivativeUnavailable):
            scale.InvertLaplaceScale(M1, 0.0, 0.5, 5.0, 128, second_derivative=True)

    def test_bad_mesh(self):
        with self.assertRaises(errors.InvalidQuery):
            scale.InvertLaplaceScale(M1, 0.0, 0.5, x_max=5.0, mesh=16)
        with self.assertRaises(errors.InvalidQuery):
            scale.InvertLaplaceScale(M1, 0.0, 0.5, x_max=0.0)


class TestStableScale(unittest.TestCase):
    def test_mittag_leffler_form(self):
        # alpha = 1.5: E_{1/2}(-z) = erfcx(z)
        x = np.array([0.25, 1.0, 4.0])
        w = scale.Build(M3)
        self.assertEqual("closed_form", w.method)
        np.testing.assert_allclose(1 - special.erfcx(np.sqrt(x)), w.W(x), rtol=1e-9)
        ww = scale.Build(M3, 0.3)
        np.testing.assert_allclose(
            (1 - special.erfcx(0.7 * np.sqrt(x))) / 0.7, ww.W(x), rtol=1e-9
        )
        self.assertEqual(0.0, w.W(0.0))
        self.assertEqual(math.inf, w.WDeriv(0.0))

    def test_matches_inversion(self):
        x = np.array([0.5, 2.0])
        closed = scale.Build(M3, 0.3)
        inverted = scale.Build(M3, 0.3, method="inversion")
        AssertRelativeClose(self, closed.W(x), inverted.W(x))

    def test_index_extremes(self):
        x = np.array([0.5, 2.0])
        for alpha in [1.1, 1.9]:
            model = levy.LevyModel(c=1.0, jumps=levy.StableJumps(alpha=alpha))
            closed = scale.Build(model)
            inverted = scale.Build(model, method="inversion")
            self.assertEqual("closed_form", closed.method)
            AssertRelativeClose(self, closed.W(x), inverted.W(x))

    def test_transform(self):
        # int_0^inf e^{-beta x} WW(x) dx = 1 / (beta + beta^{3/2} - delta beta)
        for delta in [0.0, 0.3]:
            w = scale.Build(M3, delta)
            for beta in [0.5, 2.0, 5.0]:
                value, _ = util.Quad(
                    lambda x: math.exp(-beta * x) * w.W(x), 0.0, math.inf
                )
                expected = 1 / (beta + beta**1.5 - delta * beta)
                self.assertAlmostEqual(expected, value, delta=1e-5)

    def test_discounted_uses_inversion(self):
        self.assertEqual("inversion", scale.Build(M3, 0.0, 0.5).method)
        with self.assertRaises(errors.ModelDomainError):
            scale.HyperExpPartialFractions(M3, 0.0, 0.5)


class TestScaleErrors(unittest.TestCase):
    def test_negative_q(self):
        with self.assertRaises(errors.InvalidQuery):
            scale.ScaleW(M1, -0.1, 1.0)

    def test_degenerate_drift(self):
        # E(X_1) = 1
        with self.assertRaises(errors.DegenerateDrift):
            scale.Build(M2, 1.0, 0.0)

    def test_default_x_max(self):
        w = scale.Build(M1, 0.5, 0.1)
        self.assertAlmostEqual(1.0 + 20.0 / w.phi, scale.DefaultXMax(w, 0.2, 1.0))


if __name__ == "__main__":
    unittest.main()
