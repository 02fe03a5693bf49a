"""Minimal deterministic SVG output (polar eigenvalue plots, line panels)."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 800, 600
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _f(x) -> str:
    s = f"{float(x):.2f}"
    return "0.00" if s == "-0.00" else s


def _doc(body, title):
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}">\n'
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>\n'
        f'<text x="{WIDTH / 2:.0f}" y="24" font-size="16" text-anchor="middle" '
        f'font-family="sans-serif">{escape(title)}</text>\n'
    )
    return head + "".join(body) + "</svg>\n"


def polar_eigenvalues(series, title="Eigenvalues", radius=None):
    """Eigenvalues in the complex plane with the unit circle.

    ``series`` maps a label to a complex vector; each label gets one color.
    """
    cx, cy = 330.0, 320.0
    pts = [np.asarray(v, dtype=complex) for v in series.values()]
    rmax = max([1.0] + [float(np.abs(p).max()) for p in pts if p.size])
    radius = radius or 1.1 * rmax
    scale = 260.0 / radius
    body = [
        f'<line x1="{_f(cx - 270)}" y1="{_f(cy)}" x2="{_f(cx + 270)}" y2="{_f(cy)}" stroke="#bbb"/>\n',
        f'<line x1="{_f(cx)}" y1="{_f(cy - 270)}" x2="{_f(cx)}" y2="{_f(cy + 270)}" stroke="#bbb"/>\n',
        f'<circle cx="{_f(cx)}" cy="{_f(cy)}" r="{_f(scale)}" fill="none" stroke="#444"/>\n',
    ]
    for i, (label, lam) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        for z in np.asarray(lam, dtype=complex):
            body.append(
                f'<circle cx="{_f(cx + scale * z.real)}" cy="{_f(cy - scale * z.imag)}" r="3" '
                f'fill="none" stroke="{color}"/>\n'
            )
        y = 80 + 22 * i
        body.append(f'<circle cx="640" cy="{y}" r="5" fill="none" stroke="{color}"/>\n')
        body.append(
            f'<text x="652" y="{y + 5}" font-size="13" font-family="sans-serif">'
            f"{escape(str(label))} ({len(lam)})</text>\n"
        )
    return _doc(body, title)


def line_panels(panels, title="Modes", cols=4, labels=None):
    """Grid of small line charts, one per row of ``panels`` (list of 1-D arrays
    or of lists of 1-D arrays for overlays)."""
    panels = list(panels)
    n = max(len(panels), 1)
    cols = min(cols, n)
    rows = -(-n // cols)
    pw, ph = (WIDTH - 40) / cols, (HEIGHT - 60) / rows
    body = []
    for idx, item in enumerate(panels):
        lines = item if isinstance(item, (list, tuple)) else [item]
        lines = [np.asarray(v, dtype=np.float64) for v in lines]
        x0 = 20 + (idx % cols) * pw
        y0 = 40 + (idx // cols) * ph
        body.append(
            f'<rect x="{_f(x0 + 4)}" y="{_f(y0 + 4)}" width="{_f(pw - 8)}" height="{_f(ph - 8)}" '
            f'fill="none" stroke="#ccc"/>\n'
        )
        if labels is not None:
            body.append(
                f'<text x="{_f(x0 + 10)}" y="{_f(y0 + 18)}" font-size="11" '
                f'font-family="sans-serif">{escape(str(labels[idx]))}</text>\n'
            )
        allv = np.concatenate([v for v in lines if v.size]) if any(v.size for v in lines) else np.zeros(1)
        lo, hi = float(allv.min()), float(allv.max())
        span = hi - lo if hi > lo else 1.0
        for j, v in enumerate(lines):
            if v.size < 2:
                continue
            xs = x0 + 10 + (pw - 20) * np.arange(v.size) / (v.size - 1)
            ys = y0 + ph - 12 - (ph - 34) * (v - lo) / span
            path = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(xs, ys))
            body.append(
                f'<polyline points="{path}" fill="none" stroke="{PALETTE[j % len(PALETTE)]}" '
                f'stroke-width="1"/>\n'
            )
    return _doc(body, title)
