#!/usr/bin/env python3
"""Generate SVG plots from CSVs written by the refracted CLI."""

import argparse
import logging

from refracted import plot


if __name__ == "__main__":
    logging.getLogger().setLevel(logging.INFO)
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("kind", choices=sorted(plot.PLOTS))
    parser.add_argument("src", help="CSV from `refracted scale|resolvent|simulate`")
    parser.add_argument("dst", help="output SVG")
    parser.add_argument("--b", type=float, help="refraction level to mark")
    args = parser.parse_args()
    logging.info("Generating plots")
    plot.GeneratePlot(args.kind, args.src, args.dst, b=args.b)
