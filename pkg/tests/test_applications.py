import math
import numpy as np
import unittest
from scipy import special

from refracted import applications
from refracted import config
from refracted import errors
from refracted import identities
from refracted import levy


M1 = config.Get("M1").Model()
M2 = config.Get("M2").Model()
M3 = config.Get("M3").Model()
REFRACTION = levy.RefractionConfig(delta=0.5, b=1.0)


def Dividends(x, q, refraction=REFRACTION):
    return applications.DividendQuery(x=x, q=q, refraction=refraction)


class TestDividends(unittest.TestCase):
    def test_closed_form_agrees(self):
        for model in [M1, M2]:
            for b in [0.0, 1.0, 2.5]:
                refraction = levy.RefractionConfig(delta=0.5, b=b)
                for q in [0.1, 0.5]:
                    for x in [0.0, 0.4, 1.0, 2.0, 5.0]:
                        query = Dividends(x, q, refraction)
                        generic = applications.DividendValue(model, query).value
                        closed = applications.DividendValueHyperExp(model, query)
                        self.assertAlmostEqual(generic, closed.value, delta=1e-8)
                        self.assertLess(abs(closed.zero_term), 1e-10)
                        self.assertEqual("closed_form", closed.method)

    def test_bounds_and_monotone(self):
        q = 0.1
        values = [
            applications.DividendValue(M1, Dividends(x, q)).value
            for x in np.linspace(0.0, 10.0, 21)
        ]
        self.assertTrue(np.all(np.diff(values) > 0))
        self.assertGreater(values[0], 0.0)
        self.assertLess(values[-1], 0.5 / q)
        self.assertEqual(0.0, applications.DividendValue(M1, Dividends(-1.0, q)).value)

    def test_continuous_at_barrier(self):
        for model in [M1, M2]:
            left = applications.DividendValueHyperExp(model, Dividends(1.0, 0.1)).value
            right = applications.DividendValueHyperExp(
                model, Dividends(1.0 + 1e-12, 0.1)
            ).value
            self.assertAlmostEqual(left, right, delta=1e-9)

    def test_perpetuity_limit(self):
        value = applications.DividendValueHyperExp(M1, Dividends(51.0, 0.1)).value
        self.assertAlmostEqual(0.5 / 0.1, value, delta=1e-6)

    def test_needs_positive_discount(self):
        with self.assertRaises(ValueError):
            Dividends(1.0, 0.0)


class TestOvershoot(unittest.TestCase):
    def test_total_mass_is_ruin(self):
        for x in [0.5, 1.5, 3.0]:
            total = applications.OvershootUndershoot(
                M1, REFRACTION, x, (-math.inf, 0.0), (0.0, math.inf)
            ).value
            ruin = identities.RuinProbability(M1, REFRACTION, x).value
            self.assertAlmostEqual(ruin, total, delta=1e-5)

    def test_monotone_and_local(self):
        def Mass(A, B):
            return applications.OvershootUndershoot(M1, REFRACTION, 1.5, A, B).value

        full = Mass((-math.inf, 0.0), (0.0, 4.0))
        part = Mass((-1.0, 0.0), (0.0, 4.0))
        smaller = Mass((-1.0, 0.0), (0.0, 2.0))
        self.assertTrue(0 < smaller < part < full)
        self.assertAlmostEqual(0.0, Mass((-1e6, -1e5), (0.0, 4.0)), places=12)

    def test_density(self):
        law = applications.OvershootLaw(M1, REFRACTION, 1.5)
        self.assertEqual(0.0, law.Density(0.5, 1.0))
        self.assertGreater(law.Density(-0.5, 1.0), 0.0)

    def test_requires_dominating_drift(self):
        refraction = levy.RefractionConfig(delta=1.2, b=1.0)
        with self.assertRaises(errors.DriftNotDominating):
            applications.OvershootUndershoot(
                M1, refraction, 1.0, (-1.0, 0.0), (0.0, 1.0)
            )


class TestSmoothPasting(unittest.TestCase):
    def test_gaussian_part_pastes(self):
        gap = applications.SmoothPastingGap(M2, REFRACTION, 0.1)
        self.assertAlmostEqual(0.0, gap.gap, delta=1e-6)

    def test_bounded_variation_gap(self):
        q, b, h = 0.1, 1.0, 1e-5
        gap = applications.SmoothPastingGap(M1, REFRACTION, q)
        self.assertGreater(abs(gap.gap), 1e-3)
        self.assertEqual(-np.sign(gap.residual), np.sign(gap.gap))
        self.assertFalse(gap.condition_holds)

        def V(x):
            return applications.DividendValue(M1, Dividends(x, q)).value

        self.assertAlmostEqual((V(b) - V(b - h)) / h, gap.left_deriv, delta=1e-4)
        self.assertAlmostEqual((V(b + h) - V(b)) / h, gap.right_deriv, delta=1e-4)

    def test_pasting_level(self):
        level = applications.SmoothPastingLevel(M1, 0.5, 0.1)
        self.assertAlmostEqual(0.47, level, places=2)
        refraction = levy.RefractionConfig(delta=0.5, b=level)
        gap = applications.SmoothPastingGap(M1, refraction, 0.1)
        self.assertLess(abs(gap.gap), 1e-6)
        self.assertTrue(gap.condition_holds)


class TestStableRuin(unittest.TestCase):
    def test_start_at_zero(self):
        ruin = applications.RuinProbabilityStable(0.0, 1.0, 1.0, 0.3, 1.5)
        self.assertEqual(1.0, ruin.value)

    def test_below_barrier(self):
        # alpha = 1.5: E_{1/2}(-z) = erfcx(z)
        x, b, c, delta = 0.5, 1.0, 1.0, 0.3
        k = (c - delta) / (c - delta + delta * special.erfcx(c * math.sqrt(b)))
        expected = 1 - k * (1 - special.erfcx(c * math.sqrt(x)))
        got = applications.RuinProbabilityStable(x, b, c, delta, 1.5).value
        self.assertAlmostEqual(expected, got, places=9)

    def test_barrier_at_zero(self):
        # b = 0: ruin probability of X - delta t is E_{1/2}(-(c - delta) x^{1/2})
        for x in [0.5, 2.0]:
            got = applications.RuinProbabilityStable(x, 0.0, 1.0, 0.3, 1.5).value
            self.assertAlmostEqual(special.erfcx(0.7 * math.sqrt(x)), got, places=7)

    def test_matches_generic_identity(self):
        refraction = config.Get("M3").Refraction()
        for x in [0.5, 2.0]:
            closed = applications.RuinProbabilityStable(x, 1.0, 1.0, 0.3, 1.5).value
            generic = identities.RuinProbability(M3, refraction, x).value
            self.assertAlmostEqual(generic, closed, delta=1e-6)

    def test_domain(self):
        with self.assertRaises(errors.ModelDomainError):
            applications.RuinProbabilityStable(1.0, 1.0, 1.0, 0.3, 2.5)
        with self.assertRaises(errors.HypothesisHViolation):
            applications.RuinProbabilityStable(1.0, 1.0, 1.0, 1.3, 1.5)


if __name__ == "__main__":
    unittest.main()
