"""Minimal log-log SVG convergence plots with least-squares slopes."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _slope(x, y):
    lx = np.log(x)
    if np.ptp(lx) == 0:
        return float("nan")
    return float(np.polyfit(lx, np.log(y), 1)[0])


def loglog_svg(dof, series: dict, title="convergence", width=640, height=440, window=5) -> str:
    """SVG text plotting each positive series against DOF on log-log axes.

    Legend entries carry the slope fitted over the last ``window`` points.
    """
    dof = np.asarray(dof, dtype=float)
    clean = {}
    for name, vals in series.items():
        vals = np.asarray(vals, dtype=float)
        ok = np.isfinite(vals) & (vals > 0) & (dof > 0)
        if ok.sum() >= 1:
            clean[name] = (dof[ok], vals[ok])
    left, right, top, bottom = 70, 170, 40, 50
    pw, ph = width - left - right, height - top - bottom
    if not clean:
        return f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"></svg>\n'
    xs = np.concatenate([v[0] for v in clean.values()])
    ys = np.concatenate([v[1] for v in clean.values()])
    x0, x1 = math.floor(np.log10(xs.min())), math.ceil(np.log10(xs.max()))
    y0, y1 = math.floor(np.log10(ys.min())), math.ceil(np.log10(ys.max()))
    x1 = max(x1, x0 + 1)
    y1 = max(y1, y0 + 1)

    def px(x):
        return left + (np.log10(x) - x0) / (x1 - x0) * pw

    def py(y):
        return top + (y1 - np.log10(y)) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="white" stroke="black"/>',
        f'<text x="{left + pw / 2}" y="{top - 15}" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    for e in range(x0, x1 + 1):
        x = left + (e - x0) / (x1 - x0) * pw
        out.append(f'<line x1="{x:.1f}" y1="{top}" x2="{x:.1f}" y2="{top + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{x:.1f}" y="{top + ph + 18}" text-anchor="middle">1e{e}</text>')
    for e in range(y0, y1 + 1):
        y = top + (y1 - e) / (y1 - y0) * ph
        out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + pw}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">1e{e}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">DOF</text>')
    for i, (name, (x, y)) in enumerate(clean.items()):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(x, y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for a, b in zip(x, y):
            out.append(f'<circle cx="{px(a):.1f}" cy="{py(b):.1f}" r="2.5" fill="{color}"/>')
        label = name
        w = min(window, len(x))
        s = _slope(x[-w:], y[-w:]) if w >= 2 else float("nan")
        if np.isfinite(s):
            label += f" (slope {s:.2f})"
        ly = top + 16 + 18 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 28}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 32}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
