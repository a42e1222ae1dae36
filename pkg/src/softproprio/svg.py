"""Minimal deterministic SVG plots (line and scatter), no plotting library."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
W, H = 640, 360
ML, MR, MT, MB = 60, 150, 30, 45


def _f(v: float) -> str:
    return f"{v:.2f}"


class _Axes:
    def __init__(self, xs: Sequence[np.ndarray], ys: Sequence[np.ndarray]):
        x = np.concatenate([np.ravel(a) for a in xs]) if xs else np.zeros(1)
        y = np.concatenate([np.ravel(a) for a in ys]) if ys else np.zeros(1)
        x, y = x[np.isfinite(x)], y[np.isfinite(y)]
        self.x0, self.x1 = (float(x.min()), float(x.max())) if x.size else (0.0, 1.0)
        self.y0, self.y1 = (float(y.min()), float(y.max())) if y.size else (0.0, 1.0)
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0

    def px(self, x):
        return ML + (np.asarray(x, float) - self.x0) / (self.x1 - self.x0) * (W - ML - MR)

    def py(self, y):
        return H - MB - (np.asarray(y, float) - self.y0) / (self.y1 - self.y0) * (H - MT - MB)


def _frame(ax: _Axes, title: str, xlabel: str, ylabel: str) -> list[str]:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
        'font-family="sans-serif" font-size="11">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2 - MR / 2:.0f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" fill="none" stroke="#333"/>',
        f'<text x="{(W - MR + ML) / 2:.0f}" y="{H - 8}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{(H - MB + MT) / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(H - MB + MT) / 2:.0f})">{escape(ylabel)}</text>',
    ]
    for v in np.linspace(ax.x0, ax.x1, 5):
        out.append(f'<text x="{_f(ax.px(v))}" y="{H - MB + 14}" text-anchor="middle">{v:.3g}</text>')
    for v in np.linspace(ax.y0, ax.y1, 5):
        out.append(f'<text x="{ML - 4}" y="{_f(ax.py(v) + 4)}" text-anchor="end">{v:.3g}</text>')
    return out


def _legend(labels: Sequence[str]) -> list[str]:
    out = []
    for i, lab in enumerate(labels):
        y = MT + 14 * i + 8
        c = PALETTE[i % len(PALETTE)]
        out.append(f'<rect x="{W - MR + 10}" y="{y - 8}" width="10" height="10" fill="{c}"/>')
        out.append(f'<text x="{W - MR + 24}" y="{y + 1}">{escape(lab)}</text>')
    return out


def line_plot(series: Sequence[tuple[str, np.ndarray, np.ndarray]], title: str, xlabel: str, ylabel: str,
              hlines: Sequence[tuple[str, float]] = (), shade: tuple[np.ndarray, np.ndarray] | None = None) -> str:
    """``series`` of (label, x, y); ``shade`` = (x, mask) draws grey bands where mask is true."""
    ys = [s[2] for s in series] + [np.array([v]) for _, v in hlines]
    ax = _Axes([s[1] for s in series], ys)
    out = _frame(ax, title, xlabel, ylabel)
    if shade is not None:
        x, mask = np.asarray(shade[0], float), np.asarray(shade[1], bool)
        dx = (x[1] - x[0]) if len(x) > 1 else 1.0
        for i in np.flatnonzero(mask):
            x0, x1 = ax.px(x[i] - dx / 2), ax.px(x[i] + dx / 2)
            out.append(f'<rect x="{_f(x0)}" y="{MT}" width="{_f(x1 - x0)}" height="{H - MT - MB}" '
                       'fill="#ddd" stroke="none"/>')
    for i, (_, x, y) in enumerate(series):
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(ax.px(x), ax.py(y)) if np.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="1" points="{pts}"/>')
    for j, (_, v) in enumerate(hlines):
        c = PALETTE[(len(series) + j) % len(PALETTE)]
        out.append(f'<line x1="{ML}" x2="{W - MR}" y1="{_f(ax.py(v))}" y2="{_f(ax.py(v))}" '
                   f'stroke="{c}" stroke-dasharray="4 3"/>')
    out += _legend([s[0] for s in series] + [h[0] for h in hlines])
    out.append("</svg>")
    return "\n".join(out) + "\n"


def scatter_plot(sets: Sequence[tuple[str, np.ndarray]], title: str, xlabel: str, ylabel: str) -> str:
    """``sets`` of (label, (n, 2) points)."""
    ax = _Axes([p[:, 0] for _, p in sets], [p[:, 1] for _, p in sets])
    out = _frame(ax, title, xlabel, ylabel)
    for i, (_, p) in enumerate(sets):
        c = PALETTE[i % len(PALETTE)]
        for a, b in zip(ax.px(p[:, 0]), ax.py(p[:, 1])):
            out.append(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="1.6" fill="{c}" fill-opacity="0.6"/>')
    out += _legend([s[0] for s in sets])
    out.append("</svg>")
    return "\n".join(out) + "\n"


def empty_plot(title: str, note: str = "n/a") -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
            f'font-family="sans-serif"><rect width="{W}" height="{H}" fill="white"/>'
            f'<text x="{W / 2}" y="20" text-anchor="middle">{escape(title)}</text>'
            f'<text x="{W / 2}" y="{H / 2}" text-anchor="middle" font-size="20">{escape(note)}</text></svg>\n')
