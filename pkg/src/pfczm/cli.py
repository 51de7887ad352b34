"""Command-line interface: run, criteria, audit, mesh-info.

Exit codes: 0 success, 2 configuration or input error, 3 solver
non-convergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, MeshError, SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


def _say(args, *msg):
    if not getattr(args, "quiet", False):
        print(*msg)


def _cmd_run(args) -> int:
    from .config import build_problem, emit_config, parse_config
    from .solver import energy_audit, run_evolution
    from .writers import write_history_csv, write_interface_csv, write_vtk

    cfg = parse_config(args.config)
    problem = build_problem(cfg, tau=args.tau)
    out = Path(args.out or Path(cfg.base_dir) / cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    every = cfg.snapshot_every if args.snapshot_every is None else args.snapshot_every
    (out / "config.cfg").write_text(emit_config(cfg))
    disc = problem.disc
    n = problem.load.n_steps if args.max_steps is None else min(args.max_steps, problem.load.n_steps)

    def callback(k, state, info):
        if every and k % every == 0:
            write_vtk(disc, state, out / f"state_{k:05d}.vtk")
            if disc.n_pairs:
                write_interface_csv(disc, state, out / f"interface_{k:05d}.csv")
        if k and not args.quiet and (k % max(1, n // 20) == 0 or k == n):
            print(f"step {k}/{n}  t={state.t:.6g}  min alpha={state.alpha.min():.4f}", flush=True)

    _say(args, f"mesh: {disc.n_nodes} nodes, {disc.n_tri} triangles, {disc.n_pairs} interface pairs; {n} steps")
    hist = run_evolution(problem, max_steps=args.max_steps, callback=callback)
    write_history_csv(hist, out / "history.csv")
    if not hist.completed:
        print(f"error: {hist.error}", file=sys.stderr)
        return EXIT_SOLVER
    rep = energy_audit(hist)
    _say(args, f"done: {len(hist) - 1} steps, peak F={max(np.abs(hist.F)):.6g} N/m, balance residual {rep.max_abs_normalized:.3e} of peak energy")
    _say(args, f"output in {out}")
    return EXIT_OK


def _cmd_criteria(args) -> int:
    from .criteria import bulk_onset, interface_onset
    from .config import parse_config

    cfg = parse_config(args.config)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for name, mat in cfg.materials.items():
        if not mat.damageable:
            continue
        c = bulk_onset(mat)
        lm = c.landmarks
        print(
            f"material {name}: tr_sigma_crit = {lm['trace_crit'] / 1e6:.4g} MPa "
            f"(large-GcII estimate {lm['trace_crit_approx'] / 1e6:.4g} MPa), "
            f"|dev sigma|_crit = {lm['dev_crit'] / 1e6:.4g} MPa"
        )
        if out:
            _write_locus(out / f"bulk_{name}.csv", c, ("trace", "dev_norm"))
    for name, law in cfg.laws.items():
        c = interface_onset(law)
        lm = c.landmarks
        extra = f", sigma_crit = {lm['sigma_crit'] / 1e6:.4g} MPa" if "sigma_crit" in lm else ""
        print(
            f"interface {name}: p_n onset = {lm['pn_onset'] / 1e6:.4g} MPa, "
            f"peak p_n = {lm['pn_peak'] / 1e6:.4g} MPa{extra}"
        )
        if out:
            _write_locus(out / f"interface_{name}.csv", c, ("p_n", "p_s"))
    return EXIT_OK


def _write_locus(path, curve, names):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle", *names])
        for a, (x, y) in zip(curve.angles, curve.points):
            w.writerow(["%.17g" % a, "%.17g" % x, "%.17g" % y])


def _cmd_audit(args) -> int:
    from .solver import energy_audit
    from .writers import read_history_csv

    try:
        cols = read_history_csv(args.history)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rep = energy_audit(cols)
    print(f"steps: {len(rep.residual)}  peak stored energy: {rep.peak_energy:.6g} J/m")
    print(f"final residual: {rep.final_residual:.6g} J/m  max |residual|/peak: {rep.max_abs_normalized:.3e}")
    if "residual" in cols:
        diff = float(np.max(np.abs(cols["residual"] - rep.residual), initial=0.0))
        print(f"max deviation from recorded residual column: {diff:.3e}")
    return EXIT_OK


def _cmd_mesh_info(args) -> int:
    from .mesh import load_gmsh

    mesh = load_gmsh(args.mesh)
    area = mesh.areas
    print(f"nodes: {mesh.n_nodes}  triangles: {mesh.n_triangles}  h: {mesh.h:.6g} m")
    for name, tag in mesh.subdomains.items():
        sel = mesh.tri_tags == tag
        print(f"subdomain {name}: {int(sel.sum())} triangles, area {area[sel].sum():.6g} m^2")
    for name, lines in mesh.curves.items():
        print(f"curve {name}: {len(lines)} segments, {len(mesh.boundary_groups[name])} nodes")
    for name, nodes in mesh.boundary_groups.items():
        if name not in mesh.curves:
            print(f"point group {name}: {len(nodes)} nodes")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pfczm", description="Phase-field and cohesive-interface fracture simulations")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a full evolution")
    r.add_argument("config")
    r.add_argument("--out")
    r.add_argument("--snapshot-every", type=int)
    r.add_argument("--tau", type=float, help="time step override in seconds")
    r.add_argument("--max-steps", type=int)
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=_cmd_run)
    c = sub.add_parser("criteria", help="onset loci and landmark stresses")
    c.add_argument("config")
    c.add_argument("--out")
    c.set_defaults(func=_cmd_criteria)
    a = sub.add_parser("audit", help="re-check the energy balance of a history CSV")
    a.add_argument("history")
    a.set_defaults(func=_cmd_audit)
    m = sub.add_parser("mesh-info", help="validate a mesh and print a summary")
    m.add_argument("mesh")
    m.set_defaults(func=_cmd_mesh_info)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MeshError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
