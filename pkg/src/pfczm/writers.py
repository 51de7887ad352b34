"""Result files: legacy ASCII VTK snapshots and CSV tables."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .assembly import Discretization, recover_stress

__all__ = ["write_vtk", "write_interface_csv", "write_history_csv", "read_history_csv", "HISTORY_COLUMNS"]

HISTORY_COLUMNS = ["t", "g", "F", "stored", "dissipation", "work", "residual", "sqp_iterations", "min_alpha", "min_zeta"]


def _fmt(x) -> str:
    return "%.17g" % x


def write_vtk(disc: Discretization, state, path) -> None:
    """Write the mesh with alpha, displacement, stress trace, deviatoric norm and psi.

    Only the title line carries the time, so snapshots of identical states
    differ in that line alone.
    """
    mesh = disc.mesh
    stress = recover_stress(disc, state.u, state.alpha, state.zeta)
    u = np.asarray(state.u).reshape(-1, 2)
    lines = ["# vtk DataFile Version 3.0", f"pfczm snapshot t={_fmt(state.t)}", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_nodes} double")
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.nodes]
    nt = mesh.n_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    lines += ["SCALARS alpha double 1", "LOOKUP_TABLE default"]
    lines += [_fmt(a) for a in state.alpha]
    lines.append("VECTORS displacement double")
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in u]
    lines.append(f"CELL_DATA {nt}")
    for name, data in (("stress_trace", stress.trace), ("dev_stress_norm", stress.dev_norm), ("psi", state.psi)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [_fmt(v) for v in data]
    Path(path).write_text("\n".join(lines) + "\n")


def write_interface_csv(disc: Discretization, state, path) -> None:
    """One row per interface node pair: interface, s, x, y, zeta, p_n, p_s (SI)."""
    stress = recover_stress(disc, state.u, state.alpha, state.zeta)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["interface", "s", "x", "y", "zeta", "p_n", "p_s"])
        for blk in disc.iface_blocks:
            itf = disc.mesh.interfaces[blk.name]
            order = np.argsort(itf.arclength, kind="stable")
            for k in order:
                p = blk.sl.start + k
                x, y = disc.mesh.nodes[itf.pairs[k, 0]]
                w.writerow(
                    [
                        blk.name,
                        _fmt(itf.arclength[k]),
                        _fmt(x),
                        _fmt(y),
                        _fmt(state.zeta[p]),
                        _fmt(stress.pair_pn[p]),
                        _fmt(stress.pair_ps[p]),
                    ]
                )


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for i in range(len(history)):
            w.writerow([_fmt(getattr(history, c)[i]) for c in HISTORY_COLUMNS])


def read_history_csv(path) -> dict:
    """Columns of a history CSV as float arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    head = rows[0]
    missing = [c for c in ("stored", "dissipation", "work") if c not in head]
    if missing:
        raise ValueError(f"{path} lacks column {missing[0]!r}")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(head))
    return {c: data[:, i] for i, c in enumerate(head)}
