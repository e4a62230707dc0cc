"""Plots of scale functions, resolvent densities and simulated paths."""

from matplotlib.figure import Figure
from typing import Union
import io
import logging
import os

import pandas as pd
import seaborn as sns


sns.set_theme()
sns.axes_style("darkgrid")


def ScalePlot(df: pd.DataFrame, fig: Figure, title: str, subtitle: str):
    """W and WW (when present) against x from a `scale` CSV."""
    columns = [c for c in ("W", "WW") if c in df]
    ax = sns.lineplot(data=df.set_index("x")[columns], ax=fig.subplots())

    fig.suptitle(title, fontsize=24)
    ax.set_title(subtitle, fontsize=18)
    ax.set_xlabel("x", fontsize=18)
    ax.set_ylabel("scale function", fontsize=18)
    return ax


def ResolventPlot(
    df: pd.DataFrame, fig: Figure, title: str, subtitle: str, b: float | None = None
):
    ax = fig.subplots()
    sns.lineplot(data=df, x="y", y="density", ax=ax)
    if b is not None:
        ax.axvline(b, color="r", linestyle="--", linewidth=1)

    fig.suptitle(title, fontsize=24)
    ax.set_title(subtitle, fontsize=18)
    ax.set_xlabel("y", fontsize=18)
    ax.set_ylabel("resolvent density", fontsize=18)
    return ax


def TracePlot(
    events: pd.DataFrame, fig: Figure, title: str, subtitle: str, b: float | None = None
):
    """Piecewise linear path through the event log; jumps drawn as vertical drops."""
    # Each event contributes the level just before it and the level after it.
    times = events["time"].repeat(2).to_numpy()
    levels = events[["U_pre", "U"]].to_numpy().ravel()
    ax = fig.subplots()
    ax.plot(times, levels, linewidth=1.5)
    ax.axhline(0.0, color="k", linewidth=1)
    if b is not None:
        ax.axhline(b, color="r", linestyle="--", linewidth=1)

    fig.suptitle(title, fontsize=24)
    ax.set_title(subtitle, fontsize=18)
    ax.set_xlabel("t", fontsize=18)
    ax.set_ylabel("U", fontsize=18)
    return ax


def SaveFig(fig: Figure, dst: Union[str, io.StringIO], fmt: str = "svg"):
    if isinstance(dst, str):
        # Create directory if it doesn't exist
        dirname = os.path.dirname(dst)
        if dirname and not os.path.isdir(dirname):
            os.makedirs(dirname)
    fig.savefig(dst, format=fmt, bbox_inches="tight", transparent=False)


PLOTS = {
    "scale": (ScalePlot, "Scale functions"),
    "resolvent": (ResolventPlot, "Resolvent density"),
    "trace": (TracePlot, "Refracted path"),
}


def GeneratePlot(kind: str, src: str, dst: str, b: float | None = None):
    assert kind in PLOTS, kind
    fn, title = PLOTS[kind]
    logging.info(f"Generating {kind} plot: {src} -> {dst}")
    df = pd.read_csv(src)
    fig = Figure(figsize=(16, 8))
    if kind == "scale":
        fn(df, fig, title, os.path.basename(src))
    else:
        fn(df, fig, title, os.path.basename(src), b=b)
    SaveFig(fig, dst)
