"""Triangle meshes with zero-thickness interfaces.

Meshes are read from GMSH ASCII v2.2 files.  2D physical groups become
subdomains, 1D physical groups become curves (usable as Dirichlet boundary
groups or as interfaces) and 0D physical groups become node groups (pins).  ``split_interface`` duplicates the nodes of a curve
so that the two adjacent subdomains can separate.

Jump convention: w = u[A] - u[B], w_n = w . n with n the outward normal of
side B (pointing from B into A), and s = rot90(n) so that (n, s) is right-handed.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshError

__all__ = ["Interface", "Mesh", "load_gmsh", "split_interface", "mesh_from_arrays"]

LINE, TRIANGLE, POINT = 1, 2, 15


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Interface:
    """A split interface curve.

    ``pairs[k] = (a, b)`` are the coincident node indices on side A and side B.
    ``segments`` index into ``pairs`` and are ordered so that the segment
    direction equals its tangent ``s``.  Nodal frames and weights (half the
    adjacent segment lengths) are used for nodally lumped interface terms.
    """

    name: str
    side_a: str
    side_b: str
    pairs: np.ndarray
    segments: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray
    lengths: np.ndarray
    node_normals: np.ndarray
    node_tangents: np.ndarray
    node_weights: np.ndarray
    arclength: np.ndarray
    closed: bool

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def jump(self, u):
        """Nodal jumps u[A] - u[B] in the local (n, s) frame, shape (n_pairs, 2)."""
        u = np.asarray(u, dtype=float).reshape(-1, 2)
        w = u[self.pairs[:, 0]] - u[self.pairs[:, 1]]
        return np.column_stack(
            [np.einsum("ij,ij->i", w, self.node_normals), np.einsum("ij,ij->i", w, self.node_tangents)]
        )

    def segment_jump(self, u):
        """Midpoint jumps per segment in the segment frames, shape (n_segments, 2)."""
        u = np.asarray(u, dtype=float).reshape(-1, 2)
        w = u[self.pairs[:, 0]] - u[self.pairs[:, 1]]
        wm = 0.5 * (w[self.segments[:, 0]] + w[self.segments[:, 1]])
        return np.column_stack(
            [np.einsum("ij,ij->i", wm, self.normals), np.einsum("ij,ij->i", wm, self.tangents)]
        )


@dataclass(frozen=True)
class Mesh:
    """Immutable triangulation with subdomain tags, named curves and interfaces."""

    nodes: np.ndarray
    triangles: np.ndarray
    tri_tags: np.ndarray
    subdomains: dict
    curves: dict
    boundary_groups: dict
    interfaces: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.nodes, self.triangles)

    @property
    def h(self) -> float:
        """Characteristic mesh size: mean triangle edge length."""
        p = self.nodes[self.triangles]
        e = np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2)
        return float(e.mean())

    def subdomain_of(self, name: str) -> np.ndarray:
        """Boolean mask of triangles in the named subdomain."""
        if name not in self.subdomains:
            raise MeshError(f"unknown subdomain {name!r}")
        return self.tri_tags == self.subdomains[name]

    def group_nodes(self, name: str) -> np.ndarray:
        if name not in self.boundary_groups:
            raise MeshError(f"unknown boundary group {name!r}")
        return self.boundary_groups[name]


def _signed_areas(nodes, tris):
    p = nodes[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def mesh_from_arrays(nodes, triangles, tri_tags=None, subdomains=None, curves=None, points=None) -> Mesh:
    """Build a validated Mesh from raw arrays.

    ``curves`` maps names to (k, 2) node-index segments, ``points`` maps names
    to node-index lists; both become boundary groups.

    Triangles are reoriented counter-clockwise; degenerate triangles raise
    MeshError.  Nodes not referenced by any triangle or curve are dropped.
    """
    nodes = np.asarray(nodes, dtype=float)[:, :2]
    tris = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    if tri_tags is None:
        tri_tags = np.ones(len(tris), dtype=np.int64)
    tri_tags = np.asarray(tri_tags, dtype=np.int64)
    if subdomains is None:
        subdomains = {str(t): int(t) for t in np.unique(tri_tags)}
    curves = {k: np.asarray(v, dtype=np.int64).reshape(-1, 2) for k, v in (curves or {}).items()}
    if len(tris) == 0:
        raise MeshError("mesh has no triangles")
    points = {k: np.asarray(v, dtype=np.int64).ravel() for k, v in (points or {}).items()}
    clash = set(points) & set(curves)
    if clash:
        raise MeshError(f"name {sorted(clash)[0]!r} used by both a curve and a point group")
    used = [tris.ravel()] + [c.ravel() for c in curves.values()] + list(points.values())
    allidx = np.concatenate(used)
    if allidx.min() < 0 or allidx.max() >= len(nodes):
        raise MeshError("element references a missing node")
    keep = np.unique(allidx)
    remap = -np.ones(len(nodes), dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    nodes = nodes[keep]
    tris = remap[tris]
    curves = {k: remap[c] for k, c in curves.items()}
    points = {k: remap[c] for k, c in points.items()}

    area = _signed_areas(nodes, tris)
    scale = max(np.ptp(nodes[:, 0]), np.ptp(nodes[:, 1]), 1e-300) ** 2
    if np.any(np.abs(area) <= 1e-14 * scale):
        bad = int(np.flatnonzero(np.abs(area) <= 1e-14 * scale)[0])
        raise MeshError(f"triangle {bad} has zero area")
    neg = area < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    groups = {k: _frozen(np.unique(c), np.int64) for k, c in curves.items()}
    groups.update({k: _frozen(np.unique(c), np.int64) for k, c in points.items()})
    return Mesh(
        nodes=_frozen(nodes, float),
        triangles=_frozen(tris, np.int64),
        tri_tags=_frozen(tri_tags, np.int64),
        subdomains=dict(subdomains),
        curves={k: _frozen(c, np.int64) for k, c in curves.items()},
        boundary_groups=groups,
    )


def _sections(lines):
    """Yield (name, body_lines) for each $Section ... $EndSection block."""
    i = 0
    n = len(lines)
    while i < n:
        head = lines[i].strip()
        i += 1
        if not head:
            continue
        if not head.startswith("$") or head.startswith("$End"):
            raise MeshError(f"malformed section header {head!r}")
        name = head[1:]
        body = []
        while i < n and lines[i].strip() != f"$End{name}":
            body.append(lines[i])
            i += 1
        if i >= n:
            raise MeshError(f"section ${name} is not terminated")
        i += 1
        yield name, body


def load_gmsh(path) -> Mesh:
    """Read a GMSH ASCII v2.2 mesh with points, 2-node lines and 3-node triangles."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MeshError(f"cannot read mesh {path}: {exc}") from exc
    secs = dict()
    for name, body in _sections(text.splitlines()):
        secs[name] = body
    if "MeshFormat" not in secs:
        raise MeshError("missing $MeshFormat section")
    fmt = secs["MeshFormat"][0].split()
    if len(fmt) < 2 or not fmt[0].startswith("2") or fmt[1] != "0":
        raise MeshError(f"unsupported mesh format {' '.join(fmt)!r}, need ASCII 2.2")
    names = {}
    for ln in secs.get("PhysicalNames", [])[1:]:
        parts = ln.split(maxsplit=2)
        if len(parts) < 3:
            raise MeshError(f"malformed physical name line {ln!r}")
        names[(int(parts[0]), int(parts[1]))] = parts[2].strip().strip('"')
    if "Nodes" not in secs or "Elements" not in secs:
        raise MeshError("missing $Nodes or $Elements section")
    try:
        body = secs["Nodes"]
        count = int(body[0])
        raw = np.array([ln.split() for ln in body[1 : count + 1]], dtype=float)
        if raw.shape != (count, 4):
            raise MeshError("node count does not match $Nodes body")
        ids = raw[:, 0].astype(np.int64)
        id_to_idx = {int(k): i for i, k in enumerate(ids)}
        coords = raw[:, 1:3]

        tris, tri_phys, lines_by_tag, points_by_tag = [], [], {}, {}
        body = secs["Elements"]
        count = int(body[0])
        if len(body) - 1 < count:
            raise MeshError("element count does not match $Elements body")
        for ln in body[1 : count + 1]:
            v = [int(x) for x in ln.split()]
            etype, ntags = v[1], v[2]
            tags = v[3 : 3 + ntags]
            conn = [id_to_idx[k] for k in v[3 + ntags :]]
            phys = tags[0] if tags else 0
            if etype == TRIANGLE and len(conn) == 3:
                tris.append(conn)
                tri_phys.append(phys)
            elif etype == LINE and len(conn) == 2:
                lines_by_tag.setdefault(phys, []).append(conn)
            elif etype == POINT and len(conn) == 1:
                points_by_tag.setdefault(phys, []).append(conn[0])
            else:
                raise MeshError(f"unsupported element type {etype}")
    except (ValueError, IndexError, KeyError) as exc:
        raise MeshError(f"cannot parse {path}: {exc}") from exc

    subdomains = {names.get((2, t), str(t)): t for t in sorted(set(tri_phys))}
    curves = {names.get((1, t), str(t)): np.array(c) for t, c in sorted(lines_by_tag.items())}
    points = {names.get((0, t), str(t)): np.array(c) for t, c in sorted(points_by_tag.items())}
    return mesh_from_arrays(coords, tris, tri_phys, subdomains, curves, points)


def _order_chain(segs):
    """Order an undirected segment list into a single path or cycle of nodes."""
    adj = {}
    for a, b in segs:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    if any(len(v) > 2 for v in adj.values()):
        raise MeshError("interface curve branches (node with more than two segments)")
    ends = [k for k, v in adj.items() if len(v) == 1]
    closed = not ends
    if len(ends) not in (0, 2):
        raise MeshError("interface curve must be a single connected chain")
    start = ends[0] if ends else segs[0][0]
    order = [start]
    prev = None
    while True:
        nxt = [k for k in adj[order[-1]] if k != prev]
        if not nxt or (closed and nxt[0] == start):
            break
        prev = order[-1]
        order.append(nxt[0])
        if len(order) > len(adj):
            break
    if len(order) != len(adj):
        raise MeshError("interface curve must be a single connected chain")
    return order, closed


def split_interface(mesh: Mesh, tag: str, side_b: str | None = None) -> Mesh:
    """Duplicate the nodes of curve ``tag`` so its two sides can separate.

    ``side_b`` names the subdomain whose triangles get the duplicated nodes;
    by default it is the adjacent subdomain with the smaller area (the
    inhomogeneity).  The interface normal points out of side B.
    """
    if tag in mesh.interfaces:
        raise MeshError(f"interface {tag!r} is already split")
    if tag not in mesh.curves:
        raise MeshError(f"unknown interface curve {tag!r}")
    lines = np.asarray(mesh.curves[tag])
    tris = np.array(mesh.triangles)
    tags = mesh.tri_tags
    nodes = mesh.nodes

    edge_tris = {}
    for t, tri in enumerate(tris):
        for i in range(3):
            key = tuple(sorted((int(tri[i]), int(tri[(i + 1) % 3]))))
            edge_tris.setdefault(key, []).append(t)
    adjacent = []
    for a, b in lines:
        ts = edge_tris.get(tuple(sorted((int(a), int(b)))), [])
        if len(ts) != 2 or tags[ts[0]] == tags[ts[1]]:
            raise MeshError(f"interface {tag!r} segment ({a},{b}) does not separate two subdomains")
        adjacent.append(ts)
    pair_tags = {tuple(sorted((int(tags[t0]), int(tags[t1])))) for t0, t1 in adjacent}
    if len(pair_tags) != 1:
        raise MeshError(f"interface {tag!r} touches more than two subdomains")
    t_lo, t_hi = next(iter(pair_tags))
    tag_name = {v: k for k, v in mesh.subdomains.items()}
    if side_b is None:
        area = mesh.areas
        tb = t_lo if area[tags == t_lo].sum() <= area[tags == t_hi].sum() else t_hi
    else:
        if side_b not in mesh.subdomains or mesh.subdomains[side_b] not in (t_lo, t_hi):
            raise MeshError(f"subdomain {side_b!r} is not adjacent to interface {tag!r}")
        tb = mesh.subdomains[side_b]
    ta = t_hi if tb == t_lo else t_lo

    order, closed = _order_chain([tuple(map(int, s)) for s in lines])
    m = len(order)
    n0 = len(nodes)
    dup = {old: n0 + k for k, old in enumerate(order)}
    new_nodes = np.vstack([nodes, nodes[order]])
    in_b = tags == tb
    for t in np.flatnonzero(in_b):
        tris[t] = [dup.get(int(v), int(v)) for v in tris[t]]

    pair_index = {old: k for k, old in enumerate(order)}
    pairs = np.array([[old, dup[old]] for old in order], dtype=np.int64)
    segs, normals, tangents, lengths = [], [], [], []
    for (a, b), ts in zip(lines, adjacent):
        a, b = int(a), int(b)
        tb_tri = ts[0] if tags[ts[0]] == tb else ts[1]
        tri = mesh.triangles[tb_tri]
        third = [v for v in tri if v not in (a, b)][0]
        d = nodes[b] - nodes[a]
        L = float(np.hypot(*d))
        if L <= 0:
            raise MeshError(f"interface {tag!r} has a zero-length segment")
        n = np.array([d[1], -d[0]]) / L
        if np.dot(n, nodes[third] - nodes[a]) > 0:
            n = -n
        s = np.array([-n[1], n[0]])
        if np.dot(d, s) < 0:
            a, b = b, a
        segs.append([pair_index[a], pair_index[b]])
        normals.append(n)
        tangents.append(s)
        lengths.append(L)
    segs = np.array(segs, dtype=np.int64)
    normals = np.array(normals)
    tangents = np.array(tangents)
    lengths = np.array(lengths)

    weights = np.zeros(m)
    nsum = np.zeros((m, 2))
    for k in range(2):
        np.add.at(weights, segs[:, k], 0.5 * lengths)
        np.add.at(nsum, segs[:, k], normals)
    node_n = nsum / np.linalg.norm(nsum, axis=1)[:, None]
    node_s = np.column_stack([-node_n[:, 1], node_n[:, 0]])

    # arclength along the segment direction, starting from a chain end
    nxt = {int(p): int(q) for p, q in segs}
    heads = set(nxt) - set(nxt.values())
    start = heads.pop() if heads else int(segs[0, 0])
    seglen = {int(p): L for (p, _), L in zip(segs, lengths)}
    arclength = np.zeros(m)
    cur, acc = start, 0.0
    for _ in range(len(segs)):
        if cur not in nxt:
            break
        acc += seglen[cur]
        cur = nxt[cur]
        if cur == start:
            break
        arclength[cur] = acc

    groups = {}
    for k, g in mesh.boundary_groups.items():
        extra = [dup[int(v)] for v in g if int(v) in dup]
        groups[k] = _frozen(np.unique(np.concatenate([g, extra])).astype(np.int64), np.int64)

    h = mesh.h
    if np.max(np.linalg.norm(new_nodes[pairs[:, 0]] - new_nodes[pairs[:, 1]], axis=1)) > 1e-12 * h:
        raise MeshError("interface node pairs are not coincident")

    iface = Interface(
        name=tag,
        side_a=tag_name.get(ta, str(ta)),
        side_b=tag_name.get(tb, str(tb)),
        pairs=_frozen(pairs, np.int64),
        segments=_frozen(segs, np.int64),
        normals=_frozen(normals, float),
        tangents=_frozen(tangents, float),
        lengths=_frozen(lengths, float),
        node_normals=_frozen(node_n, float),
        node_tangents=_frozen(node_s, float),
        node_weights=_frozen(weights, float),
        arclength=_frozen(arclength, float),
        closed=closed,
    )
    interfaces = dict(mesh.interfaces)
    interfaces[tag] = iface
    return dataclasses.replace(
        mesh,
        nodes=_frozen(new_nodes, float),
        triangles=_frozen(tris, np.int64),
        boundary_groups=groups,
        interfaces=interfaces,
    )
