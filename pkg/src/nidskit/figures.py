"""Deterministic SVG figure rendering via matplotlib.

Same inputs must give byte-identical SVG: the salt for element ids is
pinned and the creation date is stripped from the metadata, so reruns of
a seeded pipeline diff clean. Each layer's legend entry states how that
layer is drawn, e.g. "LycoS17 (kde)" vs "LycoS18 (scatter)".
"""

import io
from dataclasses import dataclass
from typing import Sequence

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .analysis import DensityGrid  # noqa: E402

_HASHSALT = "nidskit"
_LAYER_COLORS = ("tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple", "tab:brown")


@dataclass
class FigureLayer:
    name: str
    grid: DensityGrid


def _deterministic_rc():
    return plt.rc_context({"svg.hashsalt": _HASHSALT, "svg.fonttype": "none"})


def _save_svg(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def render_figure(layers: Sequence[FigureLayer], title: str = "",
                  xlabel: str = "", ylabel: str = "") -> bytes:
    """Render density/scatter layers into a self-contained SVG document."""
    if not layers:
        raise ValueError("render_figure needs at least one layer")
    with _deterministic_rc():
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        for i, layer in enumerate(layers):
            color = _LAYER_COLORS[i % len(_LAYER_COLORS)]
            label = f"{layer.name} ({layer.grid.mode})"
            g = layer.grid
            if g.mode == "kde":
                gx = np.linspace(g.x_range[0], g.x_range[1], g.resolution)
                gy = np.linspace(g.y_range[0], g.y_range[1], g.resolution)
                levels = np.linspace(0.0, float(g.values.max()), 8)[1:]
                if levels.size and levels[-1] > 0:
                    ax.contour(gx, gy, g.values.T, levels=levels, colors=color, linewidths=0.9)
                ax.plot([], [], color=color, label=label)
            else:
                ax.scatter(g.points[:, 0], g.points[:, 1], s=14, color=color,
                           label=label, alpha=0.8, linewidths=0)
        if title:
            ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend(loc="best")
        fig.tight_layout()
        return _save_svg(fig)


def render_metric_bars(groups: Sequence[str], series: dict, ylabel: str,
                       title: str = "") -> bytes:
    """Grouped bar chart (one bar per series member within each group)."""
    if not groups or not series:
        raise ValueError("render_metric_bars needs groups and series")
    with _deterministic_rc():
        fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(groups)), 4.0))
        n_series = len(series)
        width = 0.8 / n_series
        for i, (name, values) in enumerate(series.items()):
            xs = [g + i * width for g in range(len(groups))]
            ax.bar(xs, values, width=width, label=name,
                   color=_LAYER_COLORS[i % len(_LAYER_COLORS)])
        ax.set_xticks([g + 0.4 - width / 2 for g in range(len(groups))])
        ax.set_xticklabels(groups, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel(ylabel)
        ax.set_ylim(-1.0 if min(min(v) for v in series.values()) < 0 else 0.0, 1.05)
        if title:
            ax.set_title(title)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        return _save_svg(fig)


def render_metric_lines(x_values: Sequence[float], series: dict, xlabel: str,
                        ylabel: str, title: str = "") -> bytes:
    """Metric-versus-x lines, one per series (feature-count sweeps)."""
    if not series:
        raise ValueError("render_metric_lines needs at least one series")
    with _deterministic_rc():
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for i, (name, values) in enumerate(series.items()):
            ax.plot(x_values, values, marker="o", label=name,
                    color=_LAYER_COLORS[i % len(_LAYER_COLORS)])
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        return _save_svg(fig)


def write_svg(data: bytes, path) -> None:
    with open(path, "wb") as f:
        f.write(data)
