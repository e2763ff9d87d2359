"""Minimal deterministic SVG charts: embedding scatter plots and sweep curves.

Output depends only on the inputs; coordinates are written with a fixed
number of decimals so files can be compared byte for byte.
"""

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

WIDTH, HEIGHT = 480, 480
MARGIN = 48


def _n(v):
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _header(width, height, title):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{_n(width / 2)}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">{escape(title)}</text>',
    ]


class _Axes:
    def __init__(self, xlim, ylim, width=WIDTH, height=HEIGHT, log_x=False):
        self.log_x = log_x
        self.x0, self.x1 = (math.log10(xlim[0]), math.log10(xlim[1])) if log_x else xlim
        self.y0, self.y1 = ylim
        self.width, self.height = width, height

    def px(self, x):
        if self.log_x:
            x = math.log10(x)
        span = (self.x1 - self.x0) or 1.0
        return MARGIN + (x - self.x0) / span * (self.width - 2 * MARGIN)

    def py(self, y):
        span = (self.y1 - self.y0) or 1.0
        return self.height - MARGIN - (y - self.y0) / span * (self.height - 2 * MARGIN)

    def frame(self, xlabel, ylabel, xticks, yticks):
        w, h = self.width, self.height
        out = [f'<rect x="{MARGIN}" y="{MARGIN}" width="{w - 2 * MARGIN}" '
               f'height="{h - 2 * MARGIN}" fill="none" stroke="#000000" stroke-width="1"/>']
        for t in xticks:
            x = self.px(t)
            out.append(f'<line x1="{_n(x)}" y1="{h - MARGIN}" x2="{_n(x)}" y2="{h - MARGIN + 5}" '
                       f'stroke="#000000"/>')
            out.append(f'<text x="{_n(x)}" y="{h - MARGIN + 18}" text-anchor="middle" '
                       f'font-family="sans-serif" font-size="10">{_tick(t)}</text>')
        for t in yticks:
            y = self.py(t)
            out.append(f'<line x1="{MARGIN - 5}" y1="{_n(y)}" x2="{MARGIN}" y2="{_n(y)}" '
                       f'stroke="#000000"/>')
            out.append(f'<text x="{MARGIN - 8}" y="{_n(y + 3)}" text-anchor="end" '
                       f'font-family="sans-serif" font-size="10">{_tick(t)}</text>')
        out.append(f'<text x="{_n(w / 2)}" y="{h - 10}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
        out.append(f'<text x="14" y="{_n(h / 2)}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="12" transform="rotate(-90 14 {_n(h / 2)})">{escape(ylabel)}</text>')
        return out


def _tick(v):
    return f"{v:g}"


def _linear_ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def scatter_svg(embeddings, labels, weights=None, title="embedding"):
    """Scatter of 2-D embeddings coloured by label.

    ``weights`` (2 x M) draws one diamond per class along its weight
    direction, pulled slightly towards the origin.
    """
    emb = np.asarray(embeddings, dtype=np.float64).reshape(-1, 2)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    pts = [emb]
    diamonds = []
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64).reshape(2, -1)
        n = np.sqrt((w * w).sum(axis=0))
        diamonds = (w / np.where(n > 0, n, 1.0) * 0.9).T
        pts.append(diamonds)
    allpts = np.concatenate(pts) if any(p.size for p in pts) else np.zeros((0, 2))
    r = float(np.abs(allpts).max()) * 1.1 if allpts.size else 1.0
    r = r if r > 0 else 1.0
    ax = _Axes((-r, r), (-r, r))
    ticks = _linear_ticks(-r, r)
    out = _header(WIDTH, HEIGHT, title)
    out += ax.frame("e0", "e1", ticks, ticks)
    for (x, y), lab in zip(emb, labels):
        out.append(f'<circle cx="{_n(ax.px(x))}" cy="{_n(ax.py(y))}" r="2" '
                   f'fill="{PALETTE[lab % len(PALETTE)]}" fill-opacity="0.6"/>')
    for m, (x, y) in enumerate(diamonds):
        cx, cy = ax.px(x), ax.py(y)
        d = 7
        out.append(f'<polygon points="{_n(cx)},{_n(cy - d)} {_n(cx + d)},{_n(cy)} '
                   f'{_n(cx)},{_n(cy + d)} {_n(cx - d)},{_n(cy)}" '
                   f'fill="{PALETTE[m % len(PALETTE)]}" stroke="#000000" stroke-width="1"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def sweep_svg(curves, xlabel="alpha", title="gradient magnitude"):
    """Log-x line chart, one polyline per sweep curve."""
    xs = [g for c in curves for g in c.grid]
    ys = [v for c in curves for v in c.values]
    xlim = (min(xs), max(xs)) if xs else (1.0, 10.0)
    if xlim[0] == xlim[1]:
        xlim = (xlim[0] / 2, xlim[1] * 2)
    ylim = (0.0, max(ys) * 1.05 if ys and max(ys) > 0 else 1.0)
    ax = _Axes(xlim, ylim, log_x=True)
    lo, hi = math.floor(math.log10(xlim[0])), math.ceil(math.log10(xlim[1]))
    xticks = [10.0 ** e for e in range(lo, hi + 1) if xlim[0] <= 10.0 ** e <= xlim[1]]
    out = _header(WIDTH, HEIGHT, title)
    out += ax.frame(xlabel, "|dL/df|", xticks, _linear_ticks(*ylim))
    styles = {"hard": "", "boundary": ' stroke-dasharray="6,3"', "centroid": ' stroke-dasharray="2,2"'}
    for i, c in enumerate(curves):
        pts = " ".join(f"{_n(ax.px(g))},{_n(ax.py(v))}" for g, v in zip(c.grid, c.values))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{PALETTE[i % len(PALETTE)]}" '
                   f'stroke-width="1.5"{styles.get(c.sample_type, "")}>'
                   f'<title>sample {c.sample_id} ({escape(c.sample_type)})</title></polyline>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
