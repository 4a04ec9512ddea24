"""Static SVG line plots of scenario outputs (optional, needs matplotlib).

The CSV files are the data contract; these figures are a convenience.
SVG metadata dates and element ids are pinned so identical data give
identical bytes.
"""

from __future__ import annotations

import io

from .errors import ConfigError


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:
        raise ConfigError("plot output needs matplotlib (pip install artifact[plot])") from exc
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "acoustomech"
    import matplotlib.pyplot as plt

    return plt


def line_svg(x, ys, xlabel: str, ylabel: str, labels=None, title: str = "", logy: bool = False,
             marker: str = "") -> bytes:
    """One axis, one or more curves sharing ``x``; returns SVG bytes."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    xs = x if isinstance(x, (list, tuple)) else [x] * len(ys)
    for i, (xi, y) in enumerate(zip(xs, ys)):
        ax.plot(xi, y, marker=marker, lw=1.0, label=None if labels is None else labels[i])
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if labels is not None:
        ax.legend(fontsize=8)
    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()
