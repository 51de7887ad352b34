"""Sectioned key = value configuration with mandatory unit suffixes.

Example::

    [mesh]
    file = single_inclusion.msh
    interfaces = iface:inclusion

    [material matrix]
    Kp = 22.0 GPa
    mu = 12.3 GPa
    GcI = 0.25 J/m^2
    GcII = 25 J/m^2
    eps = 0.5 mm
    degradation = rational
    beta = 3

    [material inclusion]
    Kp = 192.3 GPa
    mu = 76.9 GPa

    [interface iface]
    kn = 6.88 TPa/m
    ks = 6.88 TPa/m
    kG = 1 PPa/m
    GciI = 0.032 J/m^2
    GciII = inf
    degradation = rational
    beta = 0.1

    [load]
    tau = 0.01 ms
    T = 1 ms
    constrain = bottom.y, top.y, pins.x
    top.y = 1 mm/s @ 0 s
    reaction = top.y

Velocity programs are comma-separated ``velocity @ start-time`` segments.
All values are converted to SI on parsing.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .materials import BulkDegradation, BulkMaterial, InterfaceDegradation, InterfaceLaw
from .solver import LoadProgram, SolverOptions

__all__ = ["SimulationConfig", "parse_config", "parse_config_string", "emit_config", "parse_quantity", "build_problem"]

_PREFIX = {"": 1.0, "k": 1e3, "M": 1e6, "G": 1e9, "T": 1e12, "P": 1e15}
UNITS = {
    "stress": {p + "Pa": f for p, f in _PREFIX.items()},
    "stiffness": {**{p + "Pa/m": f for p, f in _PREFIX.items()}, **{p + "Pa/mm": f * 1e3 for p, f in _PREFIX.items()}},
    "energy": {"J/m^2": 1.0, "N/m": 1.0, "kJ/m^2": 1e3, "mJ/m^2": 1e-3},
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6},
    "velocity": {"m/s": 1.0, "mm/s": 1e-3, "um/s": 1e-6},
}
_SI = {"stress": "Pa", "stiffness": "Pa/m", "energy": "J/m^2", "length": "m", "time": "s", "velocity": "m/s"}
_COMP = {"x": 0, "y": 1}
_COMP_NAME = {0: "x", 1: "y"}

_MATERIAL_KEYS = {
    "Kp": "stress",
    "mu": "stress",
    "GcI": "energy",
    "GcII": "energy",
    "eps": "length",
    "degradation": None,
    "beta": None,
    "delta": None,
}
_INTERFACE_KEYS = {
    "kn": "stiffness",
    "ks": "stiffness",
    "kG": "stiffness",
    "GciI": "energy",
    "GciII": "energy",
    "eps_i": "length",
    "degradation": None,
    "beta": None,
    "delta": None,
}
_SOLVER_KEYS = {"qp_tol", "qp_max_iter", "sqp_tol", "sqp_max_iter"}
_OUTPUT_KEYS = {"dir", "snapshot_every"}
_MESH_KEYS = {"file", "interfaces", "cracked"}


def parse_quantity(text: str, kind: str, allow_inf: bool = False) -> float:
    """Parse ``"<number> <unit>"`` into SI; the unit must belong to ``kind``."""
    s = text.strip()
    if allow_inf and s.lower() == "inf":
        return math.inf
    parts = s.split()
    if len(parts) != 2:
        raise ConfigError(f"expected '<value> <unit>' for a {kind}, got {text!r}")
    try:
        val = float(parts[0])
    except ValueError:
        raise ConfigError(f"bad number in {text!r}") from None
    table = UNITS[kind]
    if parts[1] not in table:
        raise ConfigError(f"unit {parts[1]!r} is not a {kind} unit (use one of {', '.join(table)})")
    return val * table[parts[1]]


def _number(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{what}: expected a number, got {text!r}") from None


def _check_keys(section, allowed):
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in section [{section.name}]")


def _group_comp(text: str):
    if "." not in text:
        raise ConfigError(f"expected <group>.<x|y>, got {text!r}")
    group, comp = text.strip().rsplit(".", 1)
    if comp not in _COMP or not group:
        raise ConfigError(f"expected <group>.<x|y>, got {text!r}")
    return group, _COMP[comp]


@dataclass(frozen=True)
class SimulationConfig:
    mesh_file: str
    interfaces: tuple
    cracked: tuple
    materials: dict
    laws: dict
    load: LoadProgram
    constraints: tuple
    reaction: tuple
    solver: SolverOptions = SolverOptions()
    output_dir: str = "out"
    snapshot_every: int = 0
    base_dir: str = field(default=".", compare=False)


def _material(sec) -> BulkMaterial:
    _check_keys(sec, _MATERIAL_KEYS)
    for key in ("Kp", "mu"):
        if key not in sec:
            raise ConfigError(f"missing key {key!r} in [{sec.name}]")
    Kp = parse_quantity(sec["Kp"], "stress")
    mu = parse_quantity(sec["mu"], "stress")
    if "GcI" not in sec:
        extra = [k for k in ("GcII", "eps", "degradation", "beta", "delta") if k in sec]
        if extra:
            raise ConfigError(f"[{sec.name}] sets {extra[0]!r} without GcI")
        return BulkMaterial(Kp, mu)
    GcI = parse_quantity(sec["GcI"], "energy")
    GcII = parse_quantity(sec["GcII"], "energy", allow_inf=True) if "GcII" in sec else GcI
    if "eps" not in sec:
        raise ConfigError(f"missing key 'eps' in [{sec.name}]")
    eps = parse_quantity(sec["eps"], "length")
    fam = sec.get("degradation", "quadratic")
    kw = {"family": fam}
    if "beta" in sec:
        kw["beta"] = _number(sec["beta"], "beta")
    if "delta" in sec:
        kw["delta_reg"] = _number(sec["delta"], "delta")
    return BulkMaterial(Kp, mu, GcI, GcII, eps, BulkDegradation(**kw))


def _law(sec) -> InterfaceLaw:
    _check_keys(sec, _INTERFACE_KEYS)
    for key in ("kn", "ks", "kG", "GciI"):
        if key not in sec:
            raise ConfigError(f"missing key {key!r} in [{sec.name}]")
    GciI = parse_quantity(sec["GciI"], "energy")
    kw = {"family": sec.get("degradation", "rational")}
    if "beta" in sec:
        kw["beta"] = _number(sec["beta"], "beta")
    if "delta" in sec:
        kw["delta"] = _number(sec["delta"], "delta")
    return InterfaceLaw(
        kn=parse_quantity(sec["kn"], "stiffness"),
        ks=parse_quantity(sec["ks"], "stiffness"),
        kG=parse_quantity(sec["kG"], "stiffness"),
        GciI=GciI,
        GciII=parse_quantity(sec["GciII"], "energy", allow_inf=True) if "GciII" in sec else GciI,
        eps_i=parse_quantity(sec["eps_i"], "length") if "eps_i" in sec else 0.0,
        degradation=InterfaceDegradation(**kw),
    )


def parse_config_string(text: str, base_dir: str | Path = ".") -> SimulationConfig:
    """Parse configuration text; relative mesh paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
    base = Path(base_dir)
    materials, laws = {}, {}
    for name in cp.sections():
        head, _, label = name.partition(" ")
        label = label.strip()
        try:
            if head == "material" and label:
                materials[label] = _material(cp[name])
            elif head == "interface" and label:
                laws[label] = _law(cp[name])
            elif name not in ("mesh", "load", "solver", "output"):
                raise ConfigError(f"unknown section [{name}]")
        except ValueError as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc
    if "mesh" not in cp or "file" not in cp["mesh"]:
        raise ConfigError("missing [mesh] file")
    _check_keys(cp["mesh"], _MESH_KEYS)
    mesh_file = str((base / cp["mesh"]["file"].strip()).resolve())
    ifaces = []
    for item in filter(None, (s.strip() for s in cp["mesh"].get("interfaces", "").split(","))):
        name, _, side = item.partition(":")
        ifaces.append((name.strip(), side.strip() or None))
    for name, _ in ifaces:
        if name not in laws:
            raise ConfigError(f"no [interface {name}] law for interface {name!r}")
    for name in laws:
        if name not in [i[0] for i in ifaces]:
            raise ConfigError(f"law for interface {name!r} but it is not listed in [mesh] interfaces")
    cracked = tuple(filter(None, (s.strip() for s in cp["mesh"].get("cracked", "").split(","))))

    if "load" not in cp:
        raise ConfigError("missing [load] section")
    ld = cp["load"]
    for key in ("tau", "T", "constrain", "reaction"):
        if key not in ld:
            raise ConfigError(f"missing key {key!r} in [load]")
    constraints = tuple(_group_comp(s) for s in ld["constrain"].split(",") if s.strip())
    reaction = _group_comp(ld["reaction"])
    segments = {}
    for key in ld:
        if key in ("tau", "T", "constrain", "reaction"):
            continue
        gc = _group_comp(key)
        if gc not in constraints:
            raise ConfigError(f"load program for {key!r} which is not in 'constrain'")
        segs = []
        for part in ld[key].split(","):
            if "@" not in part:
                raise ConfigError(f"load segment {part.strip()!r} needs '<velocity> @ <time>'")
            v, t0 = part.split("@")
            segs.append((parse_quantity(t0, "time"), parse_quantity(v, "velocity")))
        segments[gc] = segs
    try:
        load = LoadProgram(segments, parse_quantity(ld["tau"], "time"), parse_quantity(ld["T"], "time"))
    except ValueError as exc:
        raise ConfigError(f"[load]: {exc}") from exc

    opts = SolverOptions()
    if "solver" in cp:
        sv = cp["solver"]
        _check_keys(sv, _SOLVER_KEYS)
        kw = {}
        for key in ("qp_tol", "sqp_tol"):
            if key in sv:
                kw[key] = _number(sv[key], key)
        for key in ("qp_max_iter", "sqp_max_iter"):
            if key in sv:
                kw[key] = int(_number(sv[key], key))
        opts = SolverOptions(**kw)
    out_dir, every = "out", 0
    if "output" in cp:
        ov = cp["output"]
        _check_keys(ov, _OUTPUT_KEYS)
        out_dir = ov.get("dir", out_dir).strip()
        every = int(_number(ov.get("snapshot_every", "0"), "snapshot_every"))
        if every < 0:
            raise ConfigError("snapshot_every must be non-negative")
    return SimulationConfig(
        mesh_file=mesh_file,
        interfaces=tuple(ifaces),
        cracked=cracked,
        materials=materials,
        laws=laws,
        load=load,
        constraints=constraints,
        reaction=reaction,
        solver=opts,
        output_dir=out_dir,
        snapshot_every=every,
        base_dir=str(base.resolve()),
    )


def parse_config(path) -> SimulationConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config_string(text, path.parent)


def _q(value: float, kind: str) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value!r} {_SI[kind]}"


def emit_config(cfg: SimulationConfig) -> str:
    """Normalized configuration text in SI units; parses back to ``cfg``."""
    out = ["[mesh]", f"file = {cfg.mesh_file}"]
    if cfg.interfaces:
        out.append("interfaces = " + ", ".join(n if s is None else f"{n}:{s}" for n, s in cfg.interfaces))
    if cfg.cracked:
        out.append("cracked = " + ", ".join(cfg.cracked))
    for name, m in cfg.materials.items():
        out += ["", f"[material {name}]", f"Kp = {_q(m.Kp, 'stress')}", f"mu = {_q(m.mu, 'stress')}"]
        if m.damageable:
            d = m.degradation
            out += [
                f"GcI = {_q(m.GcI, 'energy')}",
                f"GcII = {_q(m.GcII, 'energy')}",
                f"eps = {_q(m.eps, 'length')}",
                f"degradation = {d.family}",
                f"beta = {d.beta!r}",
                f"delta = {d.delta_reg!r}",
            ]
    for name, law in cfg.laws.items():
        d = law.degradation
        out += [
            "",
            f"[interface {name}]",
            f"kn = {_q(law.kn, 'stiffness')}",
            f"ks = {_q(law.ks, 'stiffness')}",
            f"kG = {_q(law.kG, 'stiffness')}",
            f"GciI = {_q(law.GciI, 'energy')}",
            f"GciII = {_q(law.GciII, 'energy')}",
            f"eps_i = {_q(law.eps_i, 'length')}",
            f"degradation = {d.family}",
            f"beta = {d.beta!r}",
            f"delta = {d.delta!r}",
        ]
    ld = cfg.load
    out += [
        "",
        "[load]",
        f"tau = {_q(ld.tau, 'time')}",
        f"T = {_q(ld.T, 'time')}",
        "constrain = " + ", ".join(f"{g}.{_COMP_NAME[c]}" for g, c in cfg.constraints),
        f"reaction = {cfg.reaction[0]}.{_COMP_NAME[cfg.reaction[1]]}",
    ]
    for (g, c), segs in ld.segments.items():
        out.append(f"{g}.{_COMP_NAME[c]} = " + ", ".join(f"{_q(v, 'velocity')} @ {_q(t, 'time')}" for t, v in segs))
    s = cfg.solver
    out += ["", "[solver]", f"qp_tol = {s.qp_tol!r}", f"sqp_tol = {s.sqp_tol!r}", f"sqp_max_iter = {s.sqp_max_iter}"]
    if s.qp_max_iter is not None:
        out.append(f"qp_max_iter = {s.qp_max_iter}")
    out += ["", "[output]", f"dir = {cfg.output_dir}", f"snapshot_every = {cfg.snapshot_every}", ""]
    return "\n".join(out)


def build_problem(cfg: SimulationConfig, tau: float | None = None):
    """Load and split the mesh, cross-check names and return a solver Problem."""
    from .assembly import Discretization
    from .errors import MeshError
    from .mesh import load_gmsh, split_interface
    from .solver import Problem

    mesh = load_gmsh(cfg.mesh_file)
    for name, side in cfg.interfaces:
        if name not in mesh.curves:
            raise ConfigError(f"interface {name!r} is not a curve of the mesh")
        try:
            mesh = split_interface(mesh, name, side)
        except MeshError as exc:
            raise ConfigError(str(exc)) from exc
    for name in mesh.subdomains:
        if name not in cfg.materials:
            raise ConfigError(f"no [material {name}] for subdomain {name!r}")
    for name in cfg.materials:
        if name not in mesh.subdomains:
            raise ConfigError(f"material {name!r} names no subdomain of the mesh")
    for g, _ in list(cfg.constraints) + [cfg.reaction]:
        if g not in mesh.boundary_groups:
            raise ConfigError(f"boundary group {g!r} is not a physical curve of the mesh")
    for g in cfg.cracked:
        if g not in mesh.boundary_groups:
            raise ConfigError(f"crack group {g!r} is not a physical curve of the mesh")
    load = cfg.load
    if tau is not None:
        load = LoadProgram(load.segments, tau, load.T)
    disc = Discretization(mesh, cfg.materials, cfg.laws, cfg.constraints, cfg.cracked)
    return Problem(disc, load, cfg.solver, cfg.reaction)
