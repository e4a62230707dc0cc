import math
import numpy as np
import pydantic
import unittest

from refracted import config
from refracted import errors
from refracted import levy


def M1() -> levy.LevyModel:
    return config.Get("M1").Model()


class TestLevyModel(unittest.TestCase):
    def test_hyperexp_exponent(self):
        # psi(theta) = 2 theta - theta / (1 + theta)
        model = M1()
        self.assertAlmostEqual(2.0 / 3.0, model.LaplaceExponent(0.5), places=14)
        self.assertAlmostEqual(1.0, model.Mean(), places=14)
        self.assertAlmostEqual(
            2.0 - 1.0 / 1.5**2, model.LaplaceExponentDeriv(0.5), places=14
        )
        self.assertAlmostEqual(
            2.0 / 1.5**3, model.LaplaceExponentDeriv(0.5, 2), places=14
        )
        with self.assertRaises(errors.ModelDomainError):
            model.LaplaceExponent(-1.0)

    def test_exponent_is_vectorized(self):
        theta = np.array([0.0, 1.0, 2.0])
        got = M1().LaplaceExponent(theta)
        np.testing.assert_allclose([0.0, 1.5, 4.0 - 2.0 / 3.0], got, rtol=1e-14)

    def test_phi_inverse(self):
        model = M1()
        self.assertEqual(0.0, model.PhiInverse())
        # 2 theta^2 - 1 = 0
        self.assertAlmostEqual(1 / math.sqrt(2), model.PhiInverse(q=1.0), places=12)
        # 1.5 theta^2 + 0.4 theta - 0.1 = 0
        expected = (-0.4 + math.sqrt(0.76)) / 3
        self.assertAlmostEqual(expected, model.PhiInverse(0.5, 0.1), places=12)
        # E(X_1) < delta: nonzero root at q = 0, 0.8 = 1 / (1 + theta)
        self.assertAlmostEqual(0.25, model.PhiInverse(1.2, 0.0), places=12)

    def test_triplet(self):
        jumps = levy.ExponentialJumps(intensity=1.0, rate=1.0)
        model = levy.LevyModel.FromTriplet(1.5, 0.0, jumps)
        self.assertAlmostEqual(1.5, model.gamma, places=14)
        self.assertAlmostEqual(1.5 + 1 - 2 * math.exp(-1), model.c, places=14)

    def test_jump_measure(self):
        model = M1()
        self.assertAlmostEqual(1.0, model.JumpTail(0.0))
        self.assertAlmostEqual(math.exp(-1), model.LevyDensity(1.0))
        self.assertEqual(0.0, model.LevyDensity(-1.0))
        self.assertAlmostEqual(1.0, model.jumps.BigJumpMean(0.0))

    def test_stable(self):
        model = config.Get("M3").Model()
        self.assertFalse(model.BoundedVariation())
        self.assertAlmostEqual(12.0, model.LaplaceExponent(4.0), places=12)
        self.assertEqual(0.0, model.jumps.Mean())
        with self.assertRaises(errors.ModelDomainError):
            model.LaplaceExponent(-0.5)
        rng = np.random.Generator(np.random.Philox(0))
        self.assertTrue(np.all(model.jumps.SampleBigJumps(rng, 0.01, 100) >= 0.01))

    def test_bounded_variation_needs_positive_drift(self):
        with self.assertRaises(pydantic.ValidationError):
            levy.LevyModel(c=-1.0, jumps=levy.ExponentialJumps(intensity=1.0, rate=1.0))
        # A Gaussian part makes any drift admissible.
        levy.LevyModel(c=-1.0, sigma=1.0)

    def test_hyperexp_weights_checked(self):
        with self.assertRaises(pydantic.ValidationError):
            levy.HyperExponentialJumps(
                intensity=1.0, weights=[0.5, 0.4], rates=[1.0, 2.0]
            )
        with self.assertRaises(pydantic.ValidationError):
            levy.HyperExponentialJumps(
                intensity=1.0, weights=[0.5, 0.5], rates=[1.0, 1.0]
            )

    def test_validate_refraction(self):
        model = M1()
        levy.ValidateRefraction(model, levy.RefractionConfig(delta=1.9, b=1.0))
        with self.assertRaises(errors.HypothesisHViolation):
            levy.ValidateRefraction(model, levy.RefractionConfig(delta=2.0, b=1.0))
        with self.assertRaises(errors.NonPositiveDelta):
            levy.ValidateRefraction(model, levy.RefractionConfig(delta=0.0))
        # (H) only binds bounded variation models.
        m2 = config.Get("M2").Model()
        levy.ValidateRefraction(m2, levy.RefractionConfig(delta=5.0))


class TestExponentProperties(unittest.TestCase):
    def setUp(self):
        self.models = {code: config.Get(code).Model() for code in config.CODES}

    def test_convex(self):
        theta = np.linspace(0.05, 8.0, 60)
        for code, model in self.models.items():
            with self.subTest(code):
                self.assertEqual(0.0, model.LaplaceExponent(0.0))
                self.assertTrue(np.all(model.LaplaceExponentDeriv(theta, 2) >= 0))
                psi = model.LaplaceExponent(theta)
                self.assertGreaterEqual(np.diff(psi, 2).min(), -1e-10)

    def test_derivatives_match_differences(self):
        h = 1e-5
        for code, model in self.models.items():
            for theta in [0.2, 1.0, 3.0]:
                with self.subTest(code, theta=theta):
                    first = model.LaplaceExponentDeriv(theta)
                    numeric = (
                        model.LaplaceExponent(theta + h)
                        - model.LaplaceExponent(theta - h)
                    ) / (2 * h)
                    self.assertAlmostEqual(
                        first, numeric, delta=1e-6 * max(1.0, abs(first))
                    )
                    second = model.LaplaceExponentDeriv(theta, 2)
                    numeric = (
                        model.LaplaceExponentDeriv(theta + h)
                        - model.LaplaceExponentDeriv(theta - h)
                    ) / (2 * h)
                    self.assertAlmostEqual(
                        second, numeric, delta=1e-6 * max(1.0, abs(second))
                    )

    def test_right_inverse(self):
        delta = 0.5
        for code, model in self.models.items():
            for q in [0.0, 0.05, 0.5, 2.0, 10.0]:
                with self.subTest(code, q=q):
                    phi = model.PhiInverse(q=q)
                    phi_delta = model.PhiInverse(delta, q)
                    tol = 1e-10 * max(1.0, q)
                    self.assertAlmostEqual(q, model.LaplaceExponent(phi), delta=tol)
                    self.assertAlmostEqual(
                        q,
                        model.LaplaceExponent(phi_delta) - delta * phi_delta,
                        delta=tol,
                    )
                    self.assertGreaterEqual(phi_delta, phi)
                    roots = [model.PhiInverse(d, q) for d in [0.1, 0.3, 0.5]]
                    self.assertEqual(sorted(roots), roots)


class TestConfig(unittest.TestCase):
    def test_canonical_models(self):
        self.assertEqual(["M1", "M2", "M3"], config.CODES)
        self.assertIsNone(config.Get("M4"))
        m2 = config.Get("M2")
        self.assertEqual(1.0, m2.Model().sigma)
        self.assertEqual(levy.RefractionConfig(delta=0.5, b=1.0), m2.Refraction())

    def test_json_shape(self):
        cfg = config.RunConfig.model_validate(
            {
                "c": 2.0,
                "jumps": {
                    "type": "hyperexp",
                    "lambda": 1.0,
                    "weights": [1.0],
                    "rates": [1.0],
                },
                "delta": 0.5,
                "b": 1.0,
                "x": 1.5,
            }
        )
        self.assertEqual(M1(), cfg.Model())
        cfg.Require("x")
        with self.assertRaises(ValueError):
            cfg.Require("x", "a", "q")

    def test_rejects_bad_configs(self):
        with self.assertRaises(pydantic.ValidationError):
            config.RunConfig.model_validate(dict(c=2.0, delta=0.5, colour="red"))
        with self.assertRaises(pydantic.ValidationError):
            config.RunConfig.model_validate(dict(c=2.0, gamma=1.0, delta=0.5))
        with self.assertRaises(pydantic.ValidationError):
            config.RunConfig.model_validate(dict(delta=0.5))


if __name__ == "__main__":
    unittest.main()
