"""Minimal deterministic SVG writers: line plots, heatmaps and polar cuts.

Coordinates are printed with fixed precision so identical data always gives
byte-identical files.
"""
from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _f(v: float) -> str:
    return f"{v:.2f}"


def _header(width=WIDTH, height=HEIGHT) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _range(values) -> tuple[float, float]:
    vals = np.asarray(values, dtype=float)
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0, 1.0
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        pad = abs(hi) * 0.1 or 1.0
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    return np.linspace(lo, hi, n)


def line_plot(x, series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
              dashed=()) -> str:
    """Line plot of several y-series sharing ``x``; ``series`` maps label to values."""
    x = np.asarray(x, dtype=float)
    xlo, xhi = _range(x) if len(x) > 1 else (x[0] - 1, x[0] + 1)
    ylo, yhi = _range(np.concatenate([np.asarray(v, dtype=float).ravel() for v in series.values()]))
    pw, ph = WIDTH - 2 * MARGIN - 100, HEIGHT - 2 * MARGIN

    def px(v):
        return MARGIN + (v - xlo) / (xhi - xlo) * pw

    def py(v):
        return HEIGHT - MARGIN - (v - ylo) / (yhi - ylo) * ph

    out = _header()
    out.append(f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" font-size="14">{_escape(title)}</text>')
    out.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for t in _ticks(xlo, xhi):
        out.append(f'<text x="{_f(px(t))}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(ylo, yhi):
        out.append(f'<text x="{MARGIN - 6}" y="{_f(py(t) + 4)}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{MARGIN + pw / 2:.0f}" y="{HEIGHT - 16}" text-anchor="middle">{_escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{MARGIN + ph / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN + ph / 2:.0f})">{_escape(ylabel)}</text>')
    for i, (label, y) in enumerate(series.items()):
        y = np.asarray(y, dtype=float)
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_f(px(a))},{_f(py(b))}" for a, b in zip(x, y) if np.isfinite(b))
        dash = ' stroke-dasharray="6,4"' if label in dashed else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{pts}"/>')
        ly = MARGIN + 14 + 16 * i
        out.append(f'<line x1="{MARGIN + pw + 10}" y1="{ly - 4}" x2="{MARGIN + pw + 30}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{MARGIN + pw + 34}" y="{ly}">{_escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _colormap(t: float) -> str:
    # blue -> white -> red, t in [0, 1]
    t = min(max(t, 0.0), 1.0)
    if t < 0.5:
        a = t / 0.5
        r, g, b = 255 * a, 255 * a, 255
    else:
        a = (t - 0.5) / 0.5
        r, g, b = 255, 255 * (1 - a), 255 * (1 - a)
    return f"#{int(round(r)):02x}{int(round(g)):02x}{int(round(b)):02x}"


def heatmap(x, y, z, title: str = "", xlabel: str = "", ylabel: str = "",
            vmin: float | None = None, vmax: float | None = None) -> str:
    """Heatmap of ``z`` with shape (len(y), len(x)); color limits default to data min/max."""
    x, y, z = np.asarray(x, float), np.asarray(y, float), np.asarray(z, float)
    vmin = float(np.nanmin(z)) if vmin is None else vmin
    vmax = float(np.nanmax(z)) if vmax is None else vmax
    span = vmax - vmin or 1.0
    pw, ph = WIDTH - 2 * MARGIN - 60, HEIGHT - 2 * MARGIN
    cw, ch = pw / len(x), ph / len(y)
    out = _header()
    out.append(f'<text x="{WIDTH / 2:.0f}" y="24" text-anchor="middle" font-size="14">{_escape(title)}</text>')
    for j in range(len(y)):
        top = HEIGHT - MARGIN - (j + 1) * ch
        for i in range(len(x)):
            color = _colormap((z[j, i] - vmin) / span)
            out.append(f'<rect x="{_f(MARGIN + i * cw)}" y="{_f(top)}" width="{_f(cw + 0.05)}" '
                       f'height="{_f(ch + 0.05)}" fill="{color}"/>')
    out.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for t in _ticks(x[0], x[-1]):
        pos = MARGIN + (t - x[0]) / ((x[-1] - x[0]) or 1) * pw
        out.append(f'<text x="{_f(pos)}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y[0], y[-1]):
        pos = HEIGHT - MARGIN - (t - y[0]) / ((y[-1] - y[0]) or 1) * ph
        out.append(f'<text x="{MARGIN - 6}" y="{_f(pos + 4)}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{MARGIN + pw / 2:.0f}" y="{HEIGHT - 16}" text-anchor="middle">{_escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{MARGIN + ph / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN + ph / 2:.0f})">{_escape(ylabel)}</text>')
    # color bar
    bx = MARGIN + pw + 20
    for s in range(50):
        out.append(f'<rect x="{bx}" y="{_f(MARGIN + ph - (s + 1) * ph / 50)}" width="16" '
                   f'height="{_f(ph / 50 + 0.05)}" fill="{_colormap(s / 49)}"/>')
    out.append(f'<text x="{bx + 8}" y="{MARGIN - 6}" text-anchor="middle">{vmax:.3g}</text>')
    out.append(f'<text x="{bx + 8}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{vmin:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def polar_plot(angles, series: dict, title: str = "") -> str:
    """Polar curve r(angle) for each series, radius scaled to the global maximum."""
    size = HEIGHT
    cx, cy, rad = size / 2, size / 2 + 10, size / 2 - 50
    rmax = max(float(np.nanmax(np.asarray(v, float))) for v in series.values()) or 1.0
    out = _header(size + 140, size)
    out.append(f'<text x="{cx:.0f}" y="20" text-anchor="middle" font-size="14">{_escape(title)}</text>')
    for frac in (0.25, 0.5, 0.75, 1.0):
        out.append(f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(rad * frac)}" fill="none" stroke="#cccccc"/>')
    out.append(f'<line x1="{_f(cx - rad)}" y1="{_f(cy)}" x2="{_f(cx + rad)}" y2="{_f(cy)}" stroke="#cccccc"/>')
    out.append(f'<line x1="{_f(cx)}" y1="{_f(cy - rad)}" x2="{_f(cx)}" y2="{_f(cy + rad)}" stroke="#cccccc"/>')
    ang = np.asarray(angles, float)
    for i, (label, r) in enumerate(series.items()):
        r = np.asarray(r, float) / rmax * rad
        color = PALETTE[i % len(PALETTE)]
        # angle measured from the vertical axis, counterclockwise
        pts = " ".join(f"{_f(cx - ri * np.sin(a))},{_f(cy - ri * np.cos(a))}" for a, ri in zip(ang, r))
        out.append(f'<polygon fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = 40 + 16 * i
        out.append(f'<line x1="{size + 10}" y1="{ly - 4}" x2="{size + 30}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{size + 34}" y="{ly}">{_escape(label)}</text>')
    out.append(f'<text x="{size + 10}" y="{size - 20}">max {rmax:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
