from matplotlib.figure import Figure
import io
import os
import tempfile
import unittest

from refracted import config
from refracted import levy
from refracted import plot
from refracted import scale
from refracted import simulate


class TestPlots(unittest.TestCase):
    def test_scale_plot(self):
        table = scale.Build(config.Get("M1").Model()).Table(5.0, 64)
        fig = Figure()
        ax = plot.ScalePlot(table, fig, "Scale functions", "M1")
        self.assertEqual("x", ax.get_xlabel())
        buf = io.StringIO()
        plot.SaveFig(fig, buf)
        self.assertIn("<svg", buf.getvalue())

    def test_trace_plot(self):
        path = simulate.SimulateExactBV(
            levy.LevyModel(c=1.0), levy.RefractionConfig(delta=0.5, b=1.0), 0.0, 3.0
        )
        fig = Figure()
        ax = plot.TracePlot(path.events, fig, "Refracted path", "drift only", b=1.0)
        line = ax.get_lines()[0]
        self.assertEqual(2 * len(path.events), len(line.get_xdata()))

    def test_generate_from_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            src = os.path.join(tmp, "scale.csv")
            table = scale.Build(config.Get("M1").Model()).Table(5.0, 64)
            table.to_csv(src, index=False)
            dst = os.path.join(tmp, "plots", "scale.svg")
            plot.GeneratePlot("scale", src, dst)
            self.assertTrue(os.path.isfile(dst))


if __name__ == "__main__":
    unittest.main()
