"""Dependency-free SVG line charts with deterministic bytes.

The same numeric input always renders to identical bytes: floats are
formatted with fixed precision and series colors come from a fixed palette,
which makes charts safe for golden-file comparisons.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

__all__ = ["LineSeries", "render_line_chart", "render_csv_chart"]

_PALETTE = ("#1f6f8b", "#d1495b", "#4f772d", "#845ec2", "#c97b2d", "#4b4453")
_W, _H = 720, 460
_ML, _MR, _MT, _MB = 64, 16, 36, 56


class LineSeries:
    def __init__(self, label: str, xs: Sequence[float], ys: Sequence[float]):
        if len(xs) != len(ys):
            raise ValueError(f"series {label!r}: {len(xs)} xs vs {len(ys)} ys")
        self.label = label
        self.xs = [float(v) for v in xs]
        self.ys = [float(v) for v in ys]


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / target
    mag = 10.0 ** __import__("math").floor(__import__("math").log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        step = mult * mag
        if span / step <= target:
            break
    first = __import__("math").ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _f(v: float) -> str:
    return f"{v:.2f}"


def _fmt_tick(v: float) -> str:
    return f"{v:.6g}"


def render_line_chart(
    series: Sequence[LineSeries],
    title: str = "",
    x_label: str = "",
    y_label: str = "",
) -> str:
    pts = [(x, y) for s in series for x, y in zip(s.xs, s.ys) if _finite(x) and _finite(y)]
    if not pts:
        raise ValueError("nothing to plot: all points empty or non-finite")
    xlo, xhi = min(p[0] for p in pts), max(p[0] for p in pts)
    ylo, yhi = min(p[1] for p in pts), max(p[1] for p in pts)
    if xhi == xlo:
        xhi = xlo + 1.0
    if yhi == ylo:
        yhi = ylo + abs(ylo) * 0.1 + 1.0
    pad = 0.04 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    iw, ih = _W - _ML - _MR, _H - _MT - _MB

    def sx(x: float) -> float:
        return _ML + (x - xlo) / (xhi - xlo) * iw

    def sy(y: float) -> float:
        return _MT + (yhi - y) / (yhi - ylo) * ih

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    if title:
        out.append(
            f'<text x="{_W / 2:.0f}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>'
        )
    for t in _nice_ticks(xlo, xhi):
        x = sx(t)
        out.append(f'<line x1="{_f(x)}" y1="{_MT}" x2="{_f(x)}" y2="{_H - _MB}" stroke="#dddddd"/>')
        out.append(
            f'<text x="{_f(x)}" y="{_H - _MB + 16}" text-anchor="middle">{_fmt_tick(t)}</text>'
        )
    for t in _nice_ticks(ylo, yhi):
        y = sy(t)
        out.append(f'<line x1="{_ML}" y1="{_f(y)}" x2="{_W - _MR}" y2="{_f(y)}" stroke="#dddddd"/>')
        out.append(
            f'<text x="{_ML - 6}" y="{_f(y + 4)}" text-anchor="end">{_fmt_tick(t)}</text>'
        )
    out.append(
        f'<rect x="{_ML}" y="{_MT}" width="{iw}" height="{ih}" fill="none" stroke="#333333"/>'
    )
    if x_label:
        out.append(
            f'<text x="{_ML + iw / 2:.0f}" y="{_H - 12}" text-anchor="middle">{_esc(x_label)}</text>'
        )
    if y_label:
        out.append(
            f'<text x="14" y="{_MT + ih / 2:.0f}" text-anchor="middle" '
            f'transform="rotate(-90 14 {_MT + ih / 2:.0f})">{_esc(y_label)}</text>'
        )
    for k, s in enumerate(series):
        color = _PALETTE[k % len(_PALETTE)]
        coords = " ".join(
            f"{_f(sx(x))},{_f(sy(y))}" for x, y in zip(s.xs, s.ys) if _finite(x) and _finite(y)
        )
        if coords:
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        lx, ly = _W - _MR - 150, _MT + 16 + 16 * k
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 28}" y="{ly}">{_esc(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _finite(v: float) -> bool:
    return v == v and abs(v) != float("inf")


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_csv_chart(
    csv_path: Path | str,
    out_path: Path | str,
    x_col: str,
    y_cols: Sequence[str],
    title: str = "",
) -> None:
    """Render selected CSV columns as one chart; skips non-numeric cells."""
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{csv_path} has no data rows")
    for col in [x_col, *y_cols]:
        if col not in rows[0]:
            raise ValueError(f"column {col!r} not in {csv_path} (have {sorted(rows[0])})")
    series = []
    for col in y_cols:
        xs, ys = [], []
        for r in rows:
            try:
                x, y = float(r[x_col]), float(r[col])
            except ValueError:
                continue
            xs.append(x)
            ys.append(y)
        series.append(LineSeries(col, xs, ys))
    svg = render_line_chart(series, title=title, x_label=x_col)
    Path(out_path).write_text(svg, newline="\n")
