import numpy as np
import pytest

from pfczm.materials import bulk_degradation_eval, strain_split
from pfczm.mesh import mesh_from_arrays


def rectangle_mesh(nx, ny, lx=1.0, ly=1.0, x0=0.0, y0=0.0, diagonal="alternate"):
    """Structured triangulation of a rectangle with side groups bottom/top/left/right."""
    xs = np.linspace(x0, x0 + lx, nx + 1)
    ys = np.linspace(y0, y0 + ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            if diagonal == "alternate" and (i + j) % 2:
                tris += [[a, b, d], [b, c, d]]
            else:
                tris += [[a, b, c], [a, c, d]]
    curves = {
        "bottom": [[nid(i, 0), nid(i + 1, 0)] for i in range(nx)],
        "top": [[nid(i, ny), nid(i + 1, ny)] for i in range(nx)],
        "left": [[nid(0, j), nid(0, j + 1)] for j in range(ny)],
        "right": [[nid(nx, j), nid(nx, j + 1)] for j in range(ny)],
    }
    return mesh_from_arrays(nodes, tris, np.ones(len(tris), dtype=int), {"matrix": 1}, curves)


def bimaterial_strip(nx=4, ny=4, lx=1.0, ly=1.0):
    """Rectangle split at mid-height into 'lower' (tag 1) and 'upper' (tag 2) with curve 'mid'."""
    assert ny % 2 == 0
    base = rectangle_mesh(nx, ny, lx, ly)
    cent = base.nodes[base.triangles].mean(axis=1)
    tags = np.where(cent[:, 1] < 0.5 * ly, 1, 2)
    jm = ny // 2
    mid = [[jm * (nx + 1) + i, jm * (nx + 1) + i + 1] for i in range(nx)]
    curves = {k: base.curves[k] for k in base.curves}
    curves["mid"] = mid
    return mesh_from_arrays(base.nodes, base.triangles, tags, {"lower": 1, "upper": 2}, curves)


@pytest.fixture
def unit_square():
    return rectangle_mesh(1, 1)


def write_msh(mesh, path):
    """Minimal GMSH 2.2 writer for test meshes (curves as lines, subdomains as triangles)."""
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$PhysicalNames"]
    curve_tags = {name: 100 + k for k, name in enumerate(mesh.curves)}
    phys = [(1, t, n) for n, t in curve_tags.items()] + [(2, t, n) for n, t in mesh.subdomains.items()]
    lines += [str(len(phys))] + [f'{d} {t} "{n}"' for d, t, n in phys] + ["$EndPhysicalNames"]
    lines += ["$Nodes", str(mesh.n_nodes)] + [f"{i + 1} {x:.17g} {y:.17g} 0" for i, (x, y) in enumerate(mesh.nodes)]
    lines += ["$EndNodes", "$Elements"]
    el = []
    for name, segs in mesh.curves.items():
        t = curve_tags[name]
        el += [f"1 2 {t} {t} {a + 1} {b + 1}" for a, b in segs]
    el += [f"2 2 {t} {t} {a + 1} {b + 1} {c + 1}" for (a, b, c), t in zip(mesh.triangles, mesh.tri_tags)]
    lines += [str(len(el))] + [f"{k + 1} {e}" for k, e in enumerate(el)] + ["$EndElements"]
    path.write_text("\n".join(lines) + "\n")


STRIP_CFG = """
[mesh]
file = strip.msh
interfaces = mid:lower

[material lower]
Kp = 3.1 GPa
mu = 1.0 GPa
GcI = 1 J/m^2
GcII = 10 J/m^2
eps = 0.3 mm
degradation = rational
beta = 3

[material upper]
Kp = 3.1 GPa
mu = 1.0 GPa

[interface mid]
kn = 10 TPa/m
ks = 10 TPa/m
kG = 1 PPa/m
GciI = 0.05 J/m^2
GciII = inf
degradation = exponential
beta = 0.99
delta = 0.005

[load]
tau = 1 ms
T = 4 ms
constrain = bottom.y, top.y, left.x
top.y = 50 mm/s @ 0 s
reaction = top.y

[output]
dir = out
snapshot_every = 2
"""


@pytest.fixture
def strip_dir(tmp_path):
    write_msh(bimaterial_strip(4, 4, 1e-3, 1e-3), tmp_path / "strip.msh")
    (tmp_path / "strip.cfg").write_text(STRIP_CFG)
    return tmp_path


def cross2(a, b):
    return a[0] * b[1] - a[1] * b[0]


def affine_strain(xy, u):
    """Strain of the affine field through three nodal displacements."""
    M = np.column_stack([xy, np.ones(3)])
    coef = np.linalg.solve(M, u.reshape(3, 2))
    G = coef[:2].T  # G[i, j] = d u_i / d x_j
    return 0.5 * (G + G.T)


def direct_bulk_energy(mat, xy, u, alpha):
    e = affine_strain(xy, u)
    s = strain_split(e)
    # undamageable materials are exactly elastic
    phi = float(np.mean(bulk_degradation_eval(mat.degradation, alpha)[0])) if mat.damageable else 1.0
    area = 0.5 * abs(cross2(xy[1] - xy[0], xy[2] - xy[0]))
    dens = phi * (mat.Kp * np.sum(s.sph_plus**2) + mat.mu * np.sum(s.dev**2)) + mat.Kp * np.sum(s.sph_minus**2)
    return area * dens


def tri_dofs(tri):
    return np.repeat(2 * np.asarray(tri), 2) + np.tile([0, 1], 3)


ACCEPTANCE_LINES = {}


def report(number, ok, detail):
    """Record and print one acceptance line; the terminal summary repeats all of them."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
