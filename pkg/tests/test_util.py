import json
import math
import numpy as np
import unittest

from refracted import errors
from refracted import util


class TestUtil(unittest.TestCase):
    def test_quad_splits_at_points(self):
        # Kink at 1 is handled by splitting there.
        value, err = util.Quad(lambda x: abs(x - 1.0), 0.0, 3.0, points=(1.0, 5.0))
        self.assertAlmostEqual(2.5, value, places=10)
        self.assertLess(err, 1e-8)

    def test_quad_reversed_bounds(self):
        value, _ = util.Quad(lambda x: x, 2.0, 0.0)
        self.assertAlmostEqual(-2.0, value, places=12)
        self.assertEqual((0.0, 0.0), util.Quad(math.exp, 1.0, 1.0))

    def test_quad_rejects_non_finite(self):
        with self.assertRaises(errors.QuadratureError):
            util.Quad(lambda x: math.nan, 0.0, 1.0)

    def test_vectorize(self):
        square = util.Vectorize(lambda v: v * v)
        self.assertIsInstance(square(3.0), float)
        np.testing.assert_array_equal([1.0, 4.0], square(np.array([1.0, 2.0])))

    def test_to_json(self):
        record = dict(
            value=np.float64(0.1),
            up=math.inf,
            n=np.int64(3),
            ok=np.bool_(True),
            grid=(1.0, math.nan),
        )
        got = json.loads(util.ToJson(record))
        self.assertEqual(
            dict(value=0.1, up=None, n=3, ok=True, grid=[1.0, None]), got
        )
        # Insertion order and shortest round-trip floats.
        self.assertEqual(["value", "up", "n", "ok", "grid"], list(got))
        self.assertIn("0.1,", util.ToJson(record))


if __name__ == "__main__":
    unittest.main()
