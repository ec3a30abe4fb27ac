"""PNG and SVG renders of carpets, cluster sets and Loewner traces.

Both outputs are drawn from the same list of integer pixel rectangles and polylines,
so the SVG rasterizes to the PNG canvas exactly.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from xml.sax.saxutils import escape

import numpy as np
from PIL import Image, ImageDraw

from .errors import CarpetLabError

BACKGROUND = (255, 255, 255)
FRAME = (0, 0, 0)
HOLE_SHADES = [(173, 216, 230), (100, 160, 215), (50, 110, 190), (20, 70, 150), (10, 40, 110)]
TRIM = (60, 170, 75)
TRACE = (200, 60, 20)
PALETTE = [(230, 159, 0), (86, 180, 233), (0, 158, 115), (240, 228, 66), (0, 114, 178),
           (213, 94, 0), (204, 121, 167), (120, 120, 120)]
LEGEND_ROW = 16


@dataclass
class Scene:
    size: int
    rects: list = field(default_factory=list)       # (x0, y0, x1, y1, rgb): pixel rows/cols, inclusive
    lines: list = field(default_factory=list)       # (points [(x, y), ...], rgb)
    legend: list = field(default_factory=list)      # (label, rgb)


def _px(v, size):
    return int(round(float(v) * size))


def _cell(i, j, side, size, color):
    """Box [i/side, (i+1)/side] x [j/side, (j+1)/side] with y pointing up."""
    x0 = _px(Fraction(i, side), size)
    x1 = _px(Fraction(i + 1, side), size) - 1
    y1 = size - 1 - _px(Fraction(j, side), size)
    y0 = size - _px(Fraction(j + 1, side), size)
    return (x0, y0, max(x0, x1), max(y0, y1), color)


def carpet_scene(doc, size):
    sc = Scene(size)
    N = doc["N"]
    used = set()
    for lev in doc["levels"]:
        n = lev["level"]
        shade = HOLE_SHADES[min(max(n - 1, 0), len(HOLE_SHADES) - 1)]
        for i, j in lev["holes"]:
            sc.rects.append(_cell(i, j, N ** n, size, shade))
            used.add(("hole", n))
    for lev in doc["levels"]:
        n = lev["level"]
        for i, j in lev["trims"]:
            sc.rects.append(_cell(i, j, N ** (n + 1), size, TRIM))
            used.add(("trim", 0))
    for kind, n in sorted(used):
        if kind == "hole":
            sc.legend.append((f"removed at level {n}", HOLE_SHADES[min(max(n - 1, 0), len(HOLE_SHADES) - 1)]))
    if ("trim", 0) in used:
        sc.legend.append(("corner trim", TRIM))
    return sc


def clusters_scene(doc, size):
    sc = Scene(size)
    base = doc["base"]
    for k, cluster in enumerate(doc["clusters"]):
        color = PALETTE[k % len(PALETTE)]
        for level, i, j in cluster:
            sc.rects.append(_cell(i, j, base ** level, size, color))
    if doc["clusters"]:
        sc.legend.append((f"{len(doc['clusters'])} clusters", PALETTE[0]))
    return sc


def trace_scene(doc, size):
    sc = Scene(size)
    x, y = np.asarray(doc["x"], float), np.asarray(doc["y"], float)
    span = max(np.ptp(x), np.ptp(y), 1e-12) * 1.05
    cx = (x.max() + x.min()) / 2
    pts = [(int(round((a - cx) / span * (size - 1) + (size - 1) / 2)),
            int(round(size - 1 - b / span * (size - 1)))) for a, b in zip(x, y)]
    sc.lines.append((pts, TRACE))
    sc.legend.append((f"trace, kappa = {doc['kappa']}", TRACE))
    return sc


def scene_for(doc, size=512):
    fmt = doc.get("format") or doc.get("type")
    if fmt == "carpetlab/carpet":
        return carpet_scene(doc, size)
    if fmt == "carpetlab/cluster-set":
        return clusters_scene(doc, size)
    if fmt == "TracePolyline":
        return trace_scene(doc, size)
    raise CarpetLabError("unrenderable", f"unknown artifact type {fmt!r}")


def canvas(scene):
    """The drawing area alone (no legend) as an (H, W, 3) uint8 array."""
    img = Image.new("RGB", (scene.size, scene.size), BACKGROUND)
    d = ImageDraw.Draw(img)
    for x0, y0, x1, y1, c in scene.rects:
        d.rectangle([x0, y0, x1, y1], fill=c)
    for pts, c in scene.lines:
        if len(pts) > 1:
            d.line(pts, fill=c, width=1)
    d.rectangle([0, 0, scene.size - 1, scene.size - 1], outline=FRAME)
    return img


def to_png(scene, path):
    img = canvas(scene)
    h = scene.size + LEGEND_ROW * max(1, len(scene.legend))
    full = Image.new("RGB", (scene.size, h), BACKGROUND)
    full.paste(img, (0, 0))
    d = ImageDraw.Draw(full)
    for k, (label, c) in enumerate(scene.legend):
        y = scene.size + k * LEGEND_ROW + 3
        d.rectangle([4, y, 14, y + 10], fill=c)
        d.text((20, y - 1), label, fill=FRAME)
    full.save(path, format="PNG", optimize=False)


def _rgb(c):
    return "#%02x%02x%02x" % c


def to_svg(scene, path=None):
    s = scene.size
    h = s + LEGEND_ROW * max(1, len(scene.legend))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{h}" viewBox="0 0 {s} {h}" '
           'shape-rendering="crispEdges">',
           f'<rect x="0" y="0" width="{s}" height="{h}" fill="{_rgb(BACKGROUND)}"/>',
           '<g id="canvas">']
    for x0, y0, x1, y1, c in scene.rects:
        out.append(f'<rect x="{x0}" y="{y0}" width="{x1 - x0 + 1}" height="{y1 - y0 + 1}" fill="{_rgb(c)}"/>')
    for pts, c in scene.lines:
        if len(pts) > 1:
            p = " ".join(f"{x + 0.5},{y + 0.5}" for x, y in pts)
            out.append(f'<polyline points="{p}" fill="none" stroke="{_rgb(c)}" stroke-width="1"/>')
    out.append(f'<rect x="0.5" y="0.5" width="{s - 1}" height="{s - 1}" fill="none" stroke="{_rgb(FRAME)}"/>')
    out.append('</g><g id="legend">')
    for k, (label, c) in enumerate(scene.legend):
        y = s + k * LEGEND_ROW + 3
        out.append(f'<rect x="4" y="{y}" width="11" height="11" fill="{_rgb(c)}"/>')
        out.append(f'<text x="20" y="{y + 10}" font-size="11">{escape(label)}</text>')
    out.append("</g></svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w") as f:
            f.write(text)
    return text
