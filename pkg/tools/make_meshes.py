"""Generate the bundled desk-scale GMSH v2.2 meshes with the `triangle` package.

Run from the repository root::

    python3 tools/make_meshes.py

Lengths are written in metres.  `triangle` is needed only here, not at runtime.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import triangle

DATA = Path(__file__).resolve().parent.parent / "src" / "pfczm" / "data"
MM = 1e-3


class Builder:
    """Planar straight-line graph with named curves, point groups and regions."""

    def __init__(self):
        self.vertices = []
        self.segments = []
        self.markers = []
        self.names = {}
        self.points = {}
        self.regions = []
        self.holes = []

    def vertex(self, x, y):
        for i, (a, b) in enumerate(self.vertices):
            if abs(a - x) < 1e-12 and abs(b - y) < 1e-12:
                return i
        self.vertices.append((x, y))
        return len(self.vertices) - 1

    def marker(self, name):
        if name is None:
            return 1
        return self.names.setdefault(name, len(self.names) + 2)

    def polyline(self, pts, name=None, closed=False):
        ids = [self.vertex(x, y) for x, y in pts]
        m = self.marker(name)
        pairs = list(zip(ids[:-1], ids[1:])) + ([(ids[-1], ids[0])] if closed else [])
        for a, b in pairs:
            self.segments.append((a, b))
            self.markers.append(m)

    def line(self, p, q, h, name=None):
        n = max(1, math.ceil(math.dist(p, q) / h))
        t = np.linspace(0.0, 1.0, n + 1)
        self.polyline([(p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])) for s in t], name)

    def circle(self, c, r, h, name=None):
        n = max(12, math.ceil(2 * math.pi * r / h))
        th = 2 * math.pi * np.arange(n) / n
        self.polyline([(c[0] + r * math.cos(a), c[1] + r * math.sin(a)) for a in th], name, closed=True)

    def point(self, x, y, name):
        self.points.setdefault(name, []).append(self.vertex(x, y))

    def region(self, x, y, tag, max_area):
        self.regions.append((x, y, tag, max_area))

    def build(self, min_angle=30):
        pslg = {
            "vertices": np.array(self.vertices),
            "segments": np.array(self.segments),
            "segment_markers": np.array(self.markers)[:, None],
            "regions": np.array(self.regions, dtype=float),
        }
        if self.holes:
            pslg["holes"] = np.array(self.holes)
        return triangle.triangulate(pslg, f"pq{min_angle}Aa")


def rectangle(b, x0, y0, x1, y1, h, names=("bottom", "right", "top", "left")):
    b.line((x0, y0), (x1, y0), h, names[0])
    b.line((x1, y0), (x1, y1), h, names[1])
    b.line((x1, y1), (x0, y1), h, names[2])
    b.line((x0, y1), (x0, y0), h, names[3])


def write_msh(path, out, b: Builder, surfaces):
    """Write GMSH ASCII v2.2; ``surfaces`` maps region tag -> subdomain name."""
    verts = out["vertices"]
    tris = out["triangles"]
    attrs = out["triangle_attributes"][:, 0].astype(int)
    segs = out["segments"]
    smark = out["segment_markers"].ravel()
    curve_tag = {name: m for name, m in b.names.items()}
    point_tag = {name: 1000 + k for k, name in enumerate(b.points)}
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$PhysicalNames"]
    phys = [(0, t, n) for n, t in point_tag.items()]
    phys += [(1, t, n) for n, t in curve_tag.items()]
    phys += [(2, t, n) for t, n in surfaces.items()]
    lines.append(str(len(phys)))
    lines += [f'{d} {t} "{n}"' for d, t, n in phys]
    lines += ["$EndPhysicalNames", "$Nodes", str(len(verts))]
    lines += [f"{i + 1} {x:.17g} {y:.17g} 0" for i, (x, y) in enumerate(verts)]
    lines += ["$EndNodes", "$Elements"]
    elems = []
    for name, ids in b.points.items():
        for i in ids:
            elems.append(f"15 2 {point_tag[name]} {point_tag[name]} {i + 1}")
    named = set(curve_tag.values())
    for (p, q), m in zip(segs, smark):
        if m in named:
            elems.append(f"1 2 {m} {m} {p + 1} {q + 1}")
    for (p, q, r), a in zip(tris, attrs):
        elems.append(f"2 2 {a} {a} {p + 1} {q + 1} {r + 1}")
    lines.append(str(len(elems)))
    lines += [f"{k + 1} {e}" for k, e in enumerate(elems)]
    lines.append("$EndElements")
    Path(path).write_text("\n".join(lines) + "\n")
    print(f"{path.name}: {len(verts)} nodes, {len(tris)} triangles")


def single_inhomogeneity():
    """10 x 10 mm block, circular inhomogeneity of radius 2 mm at the centre."""
    h = 0.4 * MM
    b = Builder()
    L = 5 * MM
    rectangle(b, -L, -L, L, L, h)
    b.point(0.0, L, "pin_top")
    b.point(0.0, -L, "pin_bottom")
    b.circle((0.0, 0.0), 2 * MM, 0.8 * h, "iface")
    b.region(0.0, 0.0, 2, h * h * 0.5)
    b.region(0.9 * L, 0.9 * L, 1, h * h * 0.5)
    write_msh(DATA / "single_inhomogeneity.msh", b.build(), b, {1: "matrix", 2: "inclusion"})


def three_inhomogeneities():
    """24 x 24 mm block with three circular inhomogeneities, two of them close together."""
    h = 0.6 * MM
    b = Builder()
    L = 12 * MM
    rectangle(b, -L, -L, L, L, h)
    b.point(0.0, L, "pin_top")
    b.point(0.0, -L, "pin_bottom")
    incl = [((-5.0 * MM, 4.5 * MM), 4.5 * MM), ((6.0 * MM, -1.0 * MM), 3.5 * MM), ((-4.0 * MM, -5.5 * MM), 3.5 * MM)]
    for k, (c, r) in enumerate(incl, start=1):
        b.circle(c, r, 0.8 * h, f"iface{k}")
        b.region(c[0], c[1], 2, h * h * 0.5)
    b.region(0.99 * L, 0.99 * L, 1, h * h * 0.5)
    write_msh(DATA / "three_inhomogeneities.msh", b.build(), b, {1: "matrix", 2: "inclusion"})


def compressed_crack():
    """20 x 20 mm block with an inclined 6 mm initial crack through the centre."""
    h = 0.5 * MM
    b = Builder()
    L = 10 * MM
    rectangle(b, -L, -L, L, L, h)
    b.point(0.0, L, "pin_top")
    b.point(0.0, -L, "pin_bottom")
    a = 3 * MM / math.sqrt(2)
    b.line((-a, -a), (a, a), 0.5 * h, "crack")
    b.region(0.9 * L, 0.9 * L, 1, h * h * 0.5)
    write_msh(DATA / "compressed_crack.msh", b.build(), b, {1: "matrix"})


def combined_loading():
    """20 x 20 mm block with two 1 mm wide grooves and a central inhomogeneity."""
    h = 0.5 * MM
    b = Builder()
    L = 10 * MM
    g, w, y = 6 * MM, 1 * MM, 4 * MM
    # outer boundary with the grooves cut from the left (upper) and right (lower) edges
    b.line((-L, -L), (L, -L), h, "bottom")
    b.line((L, -L), (L, -y - w / 2), h, "right")
    b.polyline([(L, -y - w / 2), (L - g, -y - w / 2), (L - g, -y + w / 2), (L, -y + w / 2)], "groove_right")
    b.line((L, -y + w / 2), (L, L), h, "right")
    b.line((L, L), (-L, L), h, "top")
    b.line((-L, L), (-L, y + w / 2), h, "left")
    b.polyline([(-L, y + w / 2), (-L + g, y + w / 2), (-L + g, y - w / 2), (-L, y - w / 2)], "groove_left")
    b.line((-L, y - w / 2), (-L, -L), h, "left")
    b.circle((0.0, 0.0), 2.5 * MM, 0.8 * h, "iface")
    b.region(0.0, 0.0, 2, h * h * 0.5)
    b.region(0.9 * L, 0.9 * L, 1, h * h * 0.5)
    write_msh(DATA / "combined_loading.msh", b.build(), b, {1: "matrix", 2: "inclusion"})


if __name__ == "__main__":
    DATA.mkdir(parents=True, exist_ok=True)
    single_inhomogeneity()
    three_inhomogeneities()
    compressed_crack()
    combined_loading()
