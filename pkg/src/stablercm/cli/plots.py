"""Standalone SVG line plots (log-log or linear) with optional fitted lines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class Series:
    label: str
    x: list[float]
    y: list[float]
    line: bool = True
    dashed: bool = False


@dataclass
class Plot:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)
    loglog: bool = True


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        step = max(1, (b - a) // 6)
        return [float(e) for e in range(a, b + 1, step)]
    span = hi - lo or 1.0
    raw = span / 5
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step) + 1)]


def render_svg(plot: Plot, width: int = 640, height: int = 420) -> str:
    """Render ``plot`` as an SVG document; non-positive values are dropped on log axes."""
    tx = (lambda v: math.log10(v)) if plot.loglog else (lambda v: v)
    pts = []
    for s in plot.series:
        pts.append([(tx(x), tx(y)) for x, y in zip(s.x, s.y)
                    if math.isfinite(x) and math.isfinite(y) and (not plot.loglog or (x > 0 and y > 0))])
    flat = [p for ser in pts for p in ser]
    if not flat:
        flat = [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in flat), max(p[0] for p in flat)
    y0, y1 = min(p[1] for p in flat), max(p[1] for p in flat)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    padx, pady = 0.05 * (x1 - x0), 0.08 * (y1 - y0)
    x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady
    L, R, Tm, B = 80, 20, 40, 60
    pw, ph = width - L - R, height - Tm - B

    def sx(v):
        return L + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return Tm + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(plot.title)}</text>',
        f'<rect x="{L}" y="{Tm}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for v in _ticks(x0, x1, plot.loglog):
        if x0 <= v <= x1:
            lab = f"1e{int(v)}" if plot.loglog else f"{v:g}"
            out.append(f'<line x1="{sx(v):.1f}" y1="{Tm + ph}" x2="{sx(v):.1f}" y2="{Tm + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{sx(v):.1f}" y="{Tm + ph + 18}" text-anchor="middle">{lab}</text>')
    for v in _ticks(y0, y1, plot.loglog):
        if y0 <= v <= y1:
            lab = f"1e{int(v)}" if plot.loglog else f"{v:.3g}"
            out.append(f'<line x1="{L - 5}" y1="{sy(v):.1f}" x2="{L}" y2="{sy(v):.1f}" stroke="black"/>')
            out.append(f'<text x="{L - 8}" y="{sy(v) + 4:.1f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{L + pw / 2:.1f}" y="{height - 15}" text-anchor="middle">{escape(plot.xlabel)}</text>')
    out.append(f'<text x="18" y="{Tm + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {Tm + ph / 2:.1f})">{escape(plot.ylabel)}</text>')
    for i, (s, ser) in enumerate(zip(plot.series, pts)):
        color = _COLORS[i % len(_COLORS)]
        if s.line and len(ser) > 1:
            path = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in ser)
            dash = ' stroke-dasharray="6,4"' if s.dashed else ""
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        if not s.dashed:
            for a, b in ser:
                out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="3" fill="{color}"/>')
        out.append(f'<text x="{L + 10}" y="{Tm + 16 + 15 * i}" fill="{color}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
