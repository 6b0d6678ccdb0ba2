"""SVG figures with deterministic bytes: latent scatters and metric bars."""

from __future__ import annotations

import csv
import io
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import EmptyInput  # noqa: E402
from .projection import EmbeddedPoint, PointLabel  # noqa: E402

LABEL_COLORS = {
    PointLabel.REAL: "#1f77b4",
    PointLabel.SYNTHETIC_MATCHED: "#ff7f0e",
    PointLabel.SYNTHETIC_MISMATCHED: "#2ca02c",
}
LABEL_MARKERS = {PointLabel.REAL: "o", PointLabel.SYNTHETIC_MATCHED: "^", PointLabel.SYNTHETIC_MISMATCHED: "s"}

GOLDEN = (5 ** 0.5 - 1) / 2

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.fonttype": "none",   # keep text as text, no embedded glyph paths
    "svg.hashsalt": "synthaug",
    "path.simplify": False,
}


def figsize(width_in: float = 5.0, ratio: float = GOLDEN) -> tuple[float, float]:
    return width_in, width_in * ratio


@contextmanager
def figure_style(**overrides):
    with matplotlib.rc_context({**STYLE, **overrides}):
        yield


def save_svg(fig, path: str | os.PathLike) -> Path:
    """Write ``fig`` as SVG; the date stamp is dropped so reruns are byte-identical."""
    path = Path(path)
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(buf.getvalue())
    return path


def scatter_group_id(label: PointLabel) -> str:
    return f"points-{label.value}"


def points_to_csv(points: Sequence[EmbeddedPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["utterance_id", "x", "y", "label"])
    for p in points:
        w.writerow([p.utterance_id, f"{p.coords[0]:.6f}", f"{p.coords[1]:.6f}", p.label.value])
    return buf.getvalue()


def points_from_csv(text: str) -> list[EmbeddedPoint]:
    rows = csv.DictReader(io.StringIO(text))
    return [EmbeddedPoint(r["utterance_id"], (float(r["x"]), float(r["y"])), PointLabel(r["label"])) for r in rows]


def emit_scatter(points: Sequence[EmbeddedPoint], path: str | os.PathLike, title: str | None = None,
                 csv_path: str | os.PathLike | None = None) -> tuple[Path, Path]:
    """Scatter of 2-D points colored by label; writes ``path`` (SVG) and a CSV beside it.

    Each label's markers sit in an SVG group with id ``points-<label>``.
    """
    if not points:
        raise EmptyInput("no points to plot")
    path = Path(path)
    csv_path = Path(csv_path) if csv_path else path.with_suffix(".csv")
    csv_text = points_to_csv(points)

    with figure_style():
        fig, ax = plt.subplots(figsize=figsize(4.5, 0.85))
        for label in PointLabel:
            sel = [p for p in points if p.label is label]
            if not sel:
                continue
            xs = [p.coords[0] for p in sel]
            ys = [p.coords[1] for p in sel]
            coll = ax.scatter(xs, ys, s=12, c=LABEL_COLORS[label], marker=LABEL_MARKERS[label],
                              label=label.value, linewidths=0, alpha=0.8)
            coll.set_gid(scatter_group_id(label))
        ax.set_xticks([])
        ax.set_yticks([])
        if title:
            ax.set_title(title)
        ax.legend(loc="best", frameon=False, markerscale=1.5)
        fig.tight_layout()
        save_svg(fig, path)
    csv_path.write_text(csv_text)
    return path, csv_path


def emit_metric_bars(rows: Sequence[dict], metric: str, path: str | os.PathLike, label_key: str = "config",
                     ylabel: str | None = None, reference: float | None = None) -> Path:
    """One bar per row; ``reference`` draws a dashed horizontal line (e.g. a baseline)."""
    if not rows:
        raise EmptyInput("no rows to plot")
    labels = [str(r[label_key]) for r in rows]
    values = [float(r[metric]) for r in rows]
    with figure_style():
        fig, ax = plt.subplots(figsize=figsize(max(4.0, 0.6 * len(rows) + 1.5)))
        ax.bar(range(len(rows)), values, color="#4c72b0", width=0.6)
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(labels, rotation=30, ha="right")
        lo, hi = min(values), max(values)
        if reference is not None:
            ax.axhline(reference, color="0.3", ls="--", lw=0.8)
            lo, hi = min(lo, reference), max(hi, reference)
        pad = 0.1 * (hi - lo) or 0.05 * max(abs(hi), 1e-3)
        ax.set_ylim(lo - 3 * pad if lo > 0 and lo - 3 * pad > 0 else min(0.0, lo - pad), hi + pad)
        ax.set_ylabel(ylabel or metric)
        fig.tight_layout()
        return save_svg(fig, path)
