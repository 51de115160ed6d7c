"""Minimal SVG line/scatter plots (data points plus a fitted curve)."""
from xml.sax.saxutils import escape

import numpy as np

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 30, 55


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = np.ceil(lo / step) * step
    return [float(v) for v in np.arange(start, hi + 0.5 * step, step) if lo - 1e-9 * step <= v <= hi + 1e-9 * step]


_COLORS = ("#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def render(points=None, curve=None, curves=(), xlabel="", ylabel="", title=""):
    """SVG text for scatter ``points=(x, y)`` and polylines ``curve=(x, y)``.

    Extra polylines go in ``curves``.  Non-finite samples are dropped.
    """
    series = []
    for s in (points, curve, *curves):
        if s is None:
            series.append(None)
            continue
        x, y = (np.asarray(v, dtype=float) for v in s)
        ok = np.isfinite(x) & np.isfinite(y)
        series.append((x[ok], y[ok]))
    xs = np.concatenate([s[0] for s in series if s is not None] or [np.zeros(1)])
    ys = np.concatenate([s[1] for s in series if s is not None] or [np.zeros(1)])
    if xs.size == 0:
        xs = ys = np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    pad = 0.05 * (y1 - y0) if y1 > y0 else 0.5
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def sx(v):
        return _ML + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return _MT + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
           f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _nice_ticks(x0, x1):
        X = sx(t)
        out.append(f'<line x1="{X:.2f}" y1="{_MT + ph}" x2="{X:.2f}" y2="{_MT + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{_MT + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(y0, y1):
        Y = sy(t)
        out.append(f'<line x1="{_ML - 5}" y1="{Y:.2f}" x2="{_ML}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<text x="{_ML - 8}" y="{Y + 4:.2f}" text-anchor="end">{t:g}</text>')
    if series[0] is not None:
        for a, b in zip(*series[0]):
            out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="2.5" fill="#1f77b4"/>')
    for k, s in enumerate(series[1:]):
        if s is None or s[0].size < 2:
            continue
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(*s))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{_COLORS[k % len(_COLORS)]}" '
                   'stroke-width="1.5"/>')
    out.append(f'<text x="{_ML + pw / 2:.1f}" y="{_H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{_MT + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {_MT + ph / 2:.1f})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{_W / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(path, **kwargs):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render(**kwargs))
