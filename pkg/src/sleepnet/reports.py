"""CSV/JSON artifacts, run manifests and small self-contained SVG charts."""

from __future__ import annotations

import json
import platform
import sys
from html import escape
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy

import sleepnet

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def write_manifest(out_dir: str | Path, config: Mapping, seeds: Sequence[int], argv=None) -> Path:
    """Record everything needed to regenerate the outputs in ``out_dir``."""
    path = Path(out_dir) / "manifest.json"
    doc = {
        "format": "sleepnet.manifest",
        "version": 1,
        "argv": list(sys.argv if argv is None else argv),
        "config": config,
        "seeds": [int(s) for s in seeds],
        "versions": {
            "sleepnet": sleepnet.__version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    path.write_text(json.dumps(doc, indent=1, default=_jsonable))
    return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: str | Path, doc) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1, default=_jsonable))
    return path


def write_matrix_csv(path: str | Path, matrix, labels: Sequence[str] | None = None) -> Path:
    m = np.asarray(matrix)
    path = Path(path)
    labels = [str(i) for i in range(m.shape[0])] if labels is None else list(labels)
    lines = ["," + ",".join(labels)]
    for lab, row in zip(labels, m):
        lines.append(lab + "," + ",".join(f"{v:.6g}" for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def line_chart_svg(
    series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    xticks: Sequence[str] | None = None,
    width: int = 480,
    height: int = 320,
    ylim: tuple[float, float] | None = (0.0, 1.0),
) -> str:
    """Render named ``(x, y)`` series as an SVG line chart."""
    left, right, top, bottom = 56, 120, 32, 44
    pw, ph = width - left - right, height - top - bottom
    xs_all = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    ys_all = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    if x1 == x0:
        x1 = x0 + 1.0
    y0, y1 = ylim if ylim is not None else (float(np.nanmin(ys_all)), float(np.nanmax(ys_all)))
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x: float) -> float:
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y: float) -> float:
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for k in range(5):
        yv = y0 + (y1 - y0) * k / 4
        out.append(
            f'<text x="{left - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.2g}</text>'
        )
    ticks = sorted(set(xs_all.tolist()))
    for i, xv in enumerate(ticks):
        label = xticks[i] if xticks is not None and i < len(xticks) else f"{xv:g}"
        out.append(
            f'<text x="{sx(xv):.1f}" y="{top + ph + 16}" text-anchor="middle">{escape(label)}</text>'
        )
    out.append(
        f'<text x="{left + pw / 2}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="14" y="{top + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {top + ph / 2})">{escape(ylabel)}</text>'
    )
    for i, (name, (x, y)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(x, y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 14 * i + 6
        out.append(
            f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 26}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{left + pw + 30}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out)


def write_svg(path: str | Path, svg: str) -> Path:
    path = Path(path)
    path.write_text(svg)
    return path
