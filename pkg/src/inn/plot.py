"""Minimal SVG writer for log-log convergence plots."""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

_W, _H = 480, 360
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 20, 30, 50


def _decades(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def loglog_svg(x, y, slope: float | None = None, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """Scatter of ``(x, y)`` on log-log axes plus the least-squares line.

    The output is a pure function of its inputs (fixed number formatting),
    so repeated runs give identical files.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.shape != y.shape or x.size == 0 or np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log plot needs matching, positive data")
    lx, ly = np.log10(x), np.log10(y)
    xd, yd = _decades(lx.min(), lx.max()), _decades(ly.min(), ly.max())
    x0, x1 = xd[0], max(xd[-1], xd[0] + 1)
    y0, y1 = yd[0], max(yd[-1], yd[0] + 1)
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def px(v):
        return _LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return _TOP + (y1 - v) / (y1 - y0) * ph

    f = lambda v: f"{v:.2f}"
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_LEFT}" y="{_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for d in range(x0, x1 + 1):
        out.append(f'<line x1="{f(px(d))}" y1="{_TOP + ph}" x2="{f(px(d))}" y2="{_TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{f(px(d))}" y="{_TOP + ph + 18}" font-size="11" text-anchor="middle">1e{d}</text>')
    for d in range(y0, y1 + 1):
        out.append(f'<line x1="{_LEFT - 5}" y1="{f(py(d))}" x2="{_LEFT}" y2="{f(py(d))}" stroke="black"/>')
        out.append(f'<text x="{_LEFT - 8}" y="{f(py(d) + 4)}" font-size="11" text-anchor="end">1e{d}</text>')
    if x.size >= 2:
        b, a = np.polyfit(lx, ly, 1)
        out.append(
            f'<line x1="{f(px(lx.min()))}" y1="{f(py(a + b * lx.min()))}" x2="{f(px(lx.max()))}" '
            f'y2="{f(py(a + b * lx.max()))}" stroke="steelblue" stroke-width="1.5"/>'
        )
    for u, v in zip(lx, ly):
        out.append(f'<circle cx="{f(px(u))}" cy="{f(py(v))}" r="3.5" fill="firebrick"/>')
    label = escape(title) + (f" (slope {slope:.3f})" if slope is not None else "")
    out.append(f'<text x="{_W / 2:.2f}" y="18" font-size="13" text-anchor="middle">{label}</text>')
    out.append(f'<text x="{_LEFT + pw / 2:.2f}" y="{_H - 10}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{_TOP + ph / 2:.2f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {_TOP + ph / 2:.2f})">{escape(ylabel)}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_loglog_svg(path, x, y, **kw) -> Path:
    path = Path(path)
    path.write_text(loglog_svg(x, y, **kw))
    return path
