"""
Dependency-free SVG rendering of nodal vector fields.

Two layers are available: node markers coloured by field magnitude on a
linear scale (``magnitude``) and unit-length arrows showing the field
direction (``quiver``). Numbers are written with fixed precision so the
output is byte-identical for identical input.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError

STYLES = ("magnitude", "quiver", "both")

# anchors of a perceptually ordered dark-blue -> yellow ramp
_RAMP = np.array([
    [0.267, 0.005, 0.329],
    [0.230, 0.322, 0.546],
    [0.128, 0.567, 0.551],
    [0.369, 0.789, 0.383],
    [0.993, 0.906, 0.144],
])


def colour(t: float) -> str:
    """Hex colour for ``t`` in [0, 1]."""
    t = min(max(float(t), 0.0), 1.0) * (len(_RAMP) - 1)
    k = min(int(t), len(_RAMP) - 2)
    c = _RAMP[k] + (t - k) * (_RAMP[k + 1] - _RAMP[k])
    return "#" + "".join(f"{int(round(255 * v)):02x}" for v in c)


def render_svg(nodes, field, style: str = "both", edges: Sequence = (), size: int = 600,
               title: str = "") -> str:
    """SVG document for the stacked nodal ``field`` at ``nodes``.

    Parameters
    ----------
    nodes : (N, 2) array
    field : (2N,) array, ``[ex..., ey...]``
    style : "magnitude", "quiver" or "both"
    edges : optional (k, 2) node index pairs drawn as a light wireframe
    """
    if style not in STYLES:
        raise InvalidParameterError(f"unknown plot style {style!r}; choose from {STYLES}")
    nodes = np.asarray(nodes, dtype=float)
    f = np.asarray(field, dtype=float)
    N = len(nodes)
    if f.shape != (2 * N,):
        raise DimensionMismatchError(f"field has shape {f.shape}, expected ({2 * N},)")
    ex, ey = f[:N], f[N:]
    mag = np.hypot(ex, ey)

    lo, hi = nodes.min(axis=0), nodes.max(axis=0)
    span = max(hi - lo) or 1.0
    margin = 40
    scale = (size - 2 * margin) / span

    def X(p):
        return margin + (p[..., 0] - lo[0]) * scale

    def Y(p):  # flip so that +y points up
        return size - margin - (p[..., 1] - lo[1]) * scale

    px, py = X(nodes), Y(nodes)
    spacing = span / np.sqrt(max(N, 1))
    r = 0.3 * spacing * scale
    arrow = 0.7 * spacing * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 30}" '
           f'viewBox="0 0 {size} {size + 30}">',
           f'<rect width="{size}" height="{size + 30}" fill="#ffffff"/>']
    if title:
        out.append(f'<text x="{margin}" y="24" font-size="14" font-family="sans-serif">{_esc(title)}</text>')

    edges = np.asarray(edges, dtype=int).reshape(-1, 2)
    if len(edges):
        out.append('<g stroke="#d0d0d0" stroke-width="0.5">')
        for a, b in edges:
            out.append(f'<line x1="{px[a]:.2f}" y1="{py[a]:.2f}" x2="{px[b]:.2f}" y2="{py[b]:.2f}"/>')
        out.append("</g>")

    mmin, mmax = float(mag.min()), float(mag.max())
    if style in ("magnitude", "both"):
        rng = mmax - mmin
        out.append('<g id="magnitude">')
        for i in range(N):
            t = (mag[i] - mmin) / rng if rng > 0 else 0.5
            out.append(f'<circle id="n{i}" cx="{px[i]:.2f}" cy="{py[i]:.2f}" r="{r:.2f}" '
                       f'fill="{colour(t)}"/>')
        out.append("</g>")

    if style in ("quiver", "both"):
        out.append('<g id="quiver" stroke="#000000" stroke-width="0.8" fill="none">')
        for i in np.flatnonzero(mag > 0):
            sx, sy = ex[i] / mag[i], -ey[i] / mag[i]  # screen direction
            x0, y0 = px[i] - 0.5 * arrow * sx, py[i] - 0.5 * arrow * sy
            x1, y1 = px[i] + 0.5 * arrow * sx, py[i] + 0.5 * arrow * sy
            # head: the shaft direction rotated by +-30 degrees, pointing back
            hx = [x1 - 0.3 * arrow * (sx * 0.866 - sy * s) for s in (0.5, -0.5)]
            hy = [y1 - 0.3 * arrow * (sy * 0.866 + sx * s) for s in (0.5, -0.5)]
            out.append(f'<path d="M{x0:.2f},{y0:.2f} L{x1:.2f},{y1:.2f} M{hx[0]:.2f},{hy[0]:.2f} '
                       f'L{x1:.2f},{y1:.2f} L{hx[1]:.2f},{hy[1]:.2f}"/>')
        out.append("</g>")

    out.append(f'<text x="{margin}" y="{size + 20}" font-size="12" font-family="sans-serif">'
               f'|e| min {mmin:.6g}  max {mmax:.6g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
