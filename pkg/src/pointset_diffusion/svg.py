"""Minimal SVG scatter plots of point sets, one panel per set."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .core import Domain, Mask

PANEL = 200
PAD = 10


def _axes(domain: Domain) -> tuple:
    """Horizontal axis is the ordered axis when there is one."""
    if domain.dim == 1:
        return 0, None
    h = domain.ordered_axis if domain.ordered_axis is not None else 0
    v = next(j for j in range(domain.dim) if j != h)
    return h, v


def render(sets, domain: Domain, mask: Mask = None, titles=None, columns: int = 5) -> str:
    h, v = _axes(domain)
    lo, hi = domain.lo, domain.hi
    n = max(len(sets), 1)
    cols = min(columns, n)
    rows = (n + cols - 1) // cols
    width, height = cols * (PANEL + PAD) + PAD, rows * (PANEL + PAD) + PAD

    def sx(x, ox):
        return ox + (x - lo[h]) / (hi[h] - lo[h]) * PANEL

    def sy(y, oy):
        if v is None:
            return oy + PANEL / 2
        return oy + PANEL - (y - lo[v]) / (hi[v] - lo[v]) * PANEL

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}">',
    ]
    for i, X in enumerate(sets):
        ox = PAD + (i % cols) * (PANEL + PAD)
        oy = PAD + (i // cols) * (PANEL + PAD)
        out.append(f'<rect x="{ox}" y="{oy}" width="{PANEL}" height="{PANEL}" fill="white" stroke="black"/>')
        if mask is not None and mask.predicate is None and not mask.invert:
            for blo, bhi in mask.boxes:
                x0, x1 = sx(blo[h], ox), sx(bhi[h], ox)
                if v is None:
                    y0, y1 = oy, oy + PANEL
                else:
                    y0, y1 = sy(bhi[v], oy), sy(blo[v], oy)
                out.append(f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" height="{y1 - y0:.2f}" '
                           'fill="grey" fill-opacity="0.3"/>')
        pts = np.asarray(X.points)
        for p in pts:
            y = p[v] if v is not None else 0.0
            out.append(f'<circle cx="{sx(p[h], ox):.2f}" cy="{sy(y, oy):.2f}" r="2" fill="steelblue"/>')
        if titles:
            out.append(f'<text x="{ox + 4}" y="{oy + 14}" font-size="11">{escape(str(titles[i]))}</text>')
    out.append("</svg>")
    return "\n".join(out)


def write_svg(path, sets, domain: Domain, mask: Mask = None, titles=None) -> None:
    with open(path, "w") as f:
        f.write(render(sets, domain, mask, titles))
