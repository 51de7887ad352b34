"""Staggered quasi-static evolution and energy bookkeeping.

Each time step solves the displacement QP with damage frozen at the previous
step, then runs an SQP loop on the damage functional H_d with displacements
frozen.  Irreversibility is enforced by the QP upper bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    Discretization,
    EnergyParts,
    assemble_damage_qp,
    assemble_displacement_qp,
    damage_gradient,
    damage_objective,
    damage_terms,
    energy,
    internal_forces,
    pack_displacement,
    unpack_displacement,
)
from .errors import SolverError
from .qp import solve_box_qp

__all__ = [
    "LoadProgram",
    "SolverOptions",
    "State",
    "StepInfo",
    "History",
    "Problem",
    "AuditReport",
    "initial_state",
    "time_step",
    "run_evolution",
    "energy_audit",
]


@dataclass(frozen=True)
class LoadProgram:
    """Piecewise-linear prescribed displacements.

    ``segments[(group, comp)]`` is a list of ``(t_start, velocity)`` pairs; the
    velocity holds from ``t_start`` until the next segment starts.  Before the
    first ``t_start`` the velocity is zero.  Constrained components without an
    entry are held at zero.
    """

    segments: dict
    tau: float
    T: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("time step tau must be positive")
        if self.T < self.tau:
            raise ValueError("final time T must be at least tau")
        for key, segs in self.segments.items():
            ts = [s[0] for s in segs]
            if ts != sorted(ts):
                raise ValueError(f"load segments for {key} are not ordered in time")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.T / self.tau - 1e-9))

    def value(self, key, t: float) -> float:
        segs = self.segments.get(key, [])
        g = 0.0
        for i, (t0, v) in enumerate(segs):
            t1 = segs[i + 1][0] if i + 1 < len(segs) else math.inf
            if t > t0:
                g += v * (min(t, t1) - t0)
        return g

    def dirichlet_values(self, disc: Discretization, t: float):
        """Prescribed values at ``disc.fixed_dofs`` (later constraints override)."""
        full = np.zeros(disc.n_dofs)
        for group, comp in disc.constraints:
            full[2 * disc.mesh.group_nodes(group) + comp] = self.value((group, comp), t)
        return full[disc.fixed_dofs]


@dataclass(frozen=True)
class SolverOptions:
    qp_tol: float = 1e-8
    qp_max_iter: int | None = None
    sqp_tol: float = 1e-6
    sqp_max_iter: int = 200
    armijo: float = 1e-4


@dataclass(frozen=True)
class State:
    t: float
    u: np.ndarray
    alpha: np.ndarray
    zeta: np.ndarray
    psi: np.ndarray
    omega: np.ndarray
    energies: EnergyParts


@dataclass(frozen=True)
class StepInfo:
    sqp_iterations: int
    qp_kkt: float
    qp_tol: float
    damage_kkt: list
    damage_tol: list
    objective_trace: list
    dissipation: float
    f_pre: np.ndarray
    f_post: np.ndarray


@dataclass
class History:
    """Per-step records.  Row 0 is the initial elastic state at t = 0."""

    t: list = field(default_factory=list)
    g: list = field(default_factory=list)
    F: list = field(default_factory=list)
    stored: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    work: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    sqp_iterations: list = field(default_factory=list)
    min_alpha: list = field(default_factory=list)
    min_zeta: list = field(default_factory=list)
    completed: bool = False
    error: str = ""
    exception: Exception | None = None
    final_state: State | None = None

    def append(self, **row):
        """Add one step; keywords must be list-valued fields."""
        for k, v in row.items():
            getattr(self, k).append(v)

    def as_arrays(self) -> dict:
        keys = ["t", "g", "F", "stored", "dissipation", "work", "residual"]
        return {k: np.asarray(getattr(self, k), dtype=float) for k in keys}

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True)
class Problem:
    """Everything needed for a run."""

    disc: Discretization
    load: LoadProgram
    options: SolverOptions = SolverOptions()
    reaction: tuple = ("top", 1)


def _solve_displacement(disc, load, opts, alpha, zeta, t, u_guess):
    qp, layout = assemble_displacement_qp(disc, alpha, zeta, load.dirichlet_values(disc, t))
    x0 = pack_displacement(disc, layout, u_guess)
    sol = solve_box_qp(qp, x0, tol=opts.qp_tol, max_iter=opts.qp_max_iter)
    if not sol.converged:
        raise SolverError(f"displacement QP did not converge at t={t:g} (kkt {sol.kkt:.3e} > {sol.tol:.3e})")
    u, psi, omega = unpack_displacement(disc, layout, sol.x)
    return u, psi, omega, sol


def initial_state(disc: Discretization, load: LoadProgram, opts: SolverOptions = SolverOptions()) -> State:
    """Intact damage (except initial cracks) and the elastic solution at t = 0."""
    alpha = disc.initial_alpha()
    zeta = disc.initial_zeta()
    u, psi, omega, _ = _solve_displacement(disc, load, opts, alpha, zeta, 0.0, np.zeros(disc.n_dofs))
    return State(0.0, u, alpha, zeta, psi, omega, energy(disc, u, alpha, zeta))


def time_step(disc: Discretization, prev: State, t: float, load: LoadProgram, opts: SolverOptions = SolverOptions()):
    """Advance one staggered step to time ``t``; returns ``(State, StepInfo)``."""
    u, psi, omega, usol = _solve_displacement(disc, load, opts, prev.alpha, prev.zeta, t, prev.u)
    terms = damage_terms(disc, u)
    an = disc.alpha_nodes
    a_prev, z_prev = prev.alpha, prev.zeta
    alpha, zeta = a_prev.copy(), z_prev.copy()
    H = damage_objective(disc, terms, alpha, zeta, a_prev, z_prev)
    trace = [H]
    kkts, tols = [], []
    scale = max(abs(H), float(np.abs(terms.w_vertex).sum()), float(disc.alpha_source.sum()), 1e-300)
    it = 0
    while True:
        it += 1
        if it > opts.sqp_max_iter:
            raise SolverError(f"damage SQP exceeded {opts.sqp_max_iter} iterations at t={t:g}")
        qp = assemble_damage_qp(disc, terms, alpha, zeta, a_prev, z_prev)
        x0 = np.concatenate([alpha[an], zeta])
        sol = solve_box_qp(qp, x0, tol=opts.qp_tol, max_iter=opts.qp_max_iter)
        if not sol.converged:
            raise SolverError(f"damage QP did not converge at t={t:g} (kkt {sol.kkt:.3e})")
        kkts.append(sol.kkt)
        tols.append(sol.tol)
        da = np.zeros_like(alpha)
        da[an] = sol.x[: len(an)] - alpha[an]
        dz = sol.x[len(an) :] - zeta
        step_norm = max(np.abs(da).max(initial=0.0), np.abs(dz).max(initial=0.0))
        if step_norm < opts.sqp_tol:
            break
        ga, gz = damage_gradient(disc, terms, alpha, zeta)
        slope = float(ga @ da + gz @ dz)
        s = 1.0
        for _ in range(60):
            a_new = np.clip(alpha + s * da, 0.0, a_prev)
            z_new = np.clip(zeta + s * dz, 0.0, z_prev)
            H_new = damage_objective(disc, terms, a_new, z_new, a_prev, z_prev)
            if H_new <= H + opts.armijo * s * min(slope, 0.0) + 1e-14 * scale:
                break
            s *= 0.5
        else:
            raise SolverError(f"damage line search failed at t={t:g}")
        if H_new > H + 1e-12 * scale:
            raise SolverError(f"damage objective increased at t={t:g}")
        alpha, zeta, H = a_new, z_new, H_new
        trace.append(H)
        if s == 1.0 and step_norm < opts.sqp_tol:
            break
    if np.any(alpha > a_prev) or np.any(zeta > z_prev):
        raise SolverError("irreversibility violated")
    diss = float(terms.alpha_diss @ (a_prev - alpha))
    if disc.n_pairs:
        diss += float(disc.pair_weights @ (terms.zeta_diss * (z_prev - zeta)))
    f_pre = internal_forces(disc, u, a_prev, z_prev)
    f_post = internal_forces(disc, u, alpha, zeta)
    state = State(t, u, alpha, zeta, psi, omega, energy(disc, u, alpha, zeta))
    info = StepInfo(it, usol.kkt, usol.tol, kkts, tols, trace, diss, f_pre, f_post)
    return state, info


def _reaction(disc, f, reaction):
    group, comp = reaction
    return float(f[2 * disc.mesh.group_nodes(group) + comp].sum())


def run_evolution(problem: Problem, max_steps: int | None = None, callback=None) -> History:
    """Run ``ceil(T/tau)`` steps (or ``max_steps``).

    ``callback(k, state, info)`` is called after the initial solve (k = 0,
    info None) and after every step.  On a solver error the partial history is
    returned with ``error`` and ``exception`` set and ``completed`` False.
    """
    disc, load, opts = problem.disc, problem.load, problem.options
    hist = History()
    state = initial_state(disc, load, opts)
    f_post = internal_forces(disc, state.u, state.alpha, state.zeta)
    e0 = state.energies.total
    fixed = disc.fixed_dofs
    g_prev = load.dirichlet_values(disc, 0.0)
    work = 0.0
    diss_cum = 0.0
    hist.append(
        t=0.0,
        g=load.value(problem.reaction, 0.0),
        F=_reaction(disc, f_post, problem.reaction),
        stored=e0,
        dissipation=0.0,
        work=0.0,
        residual=0.0,
        sqp_iterations=0,
        min_alpha=float(state.alpha.min()),
        min_zeta=float(state.zeta.min()) if disc.n_pairs else 1.0,
    )
    if callback:
        callback(0, state, None)
    n = load.n_steps if max_steps is None else min(load.n_steps, max_steps)
    for k in range(1, n + 1):
        t = k * load.tau
        try:
            new, info = time_step(disc, state, t, load, opts)
        except SolverError as exc:
            hist.error = str(exc)
            hist.exception = exc
            hist.final_state = state
            return hist
        g = load.dirichlet_values(disc, t)
        work += 0.5 * float((info.f_pre[fixed] + f_post[fixed]) @ (g - g_prev))
        diss_cum += info.dissipation
        E = new.energies.total
        hist.append(
            t=t,
            g=load.value(problem.reaction, t),
            F=_reaction(disc, info.f_post, problem.reaction),
            stored=E,
            dissipation=diss_cum,
            work=work,
            residual=E + diss_cum - e0 - work,
            sqp_iterations=info.sqp_iterations,
            min_alpha=float(new.alpha.min()),
            min_zeta=float(new.zeta.min()) if disc.n_pairs else 1.0,
        )
        if callback:
            callback(k, new, info)
        state, f_post, g_prev = new, info.f_post, g
    hist.completed = True
    hist.final_state = state
    return hist


@dataclass(frozen=True)
class AuditReport:
    residual: np.ndarray
    normalized: np.ndarray
    peak_energy: float
    final_residual: float
    max_abs_normalized: float


def energy_audit(history) -> AuditReport:
    """Energy balance residual E(t) + R(t) - E(0) - W(t) per step.

    Accepts a History or a mapping with columns ``stored``, ``dissipation`` and
    ``work``.  The normalized residual divides by the peak stored energy.
    """
    cols = history.as_arrays() if isinstance(history, History) else history
    E = np.asarray(cols["stored"], dtype=float)
    R = np.asarray(cols["dissipation"], dtype=float)
    W = np.asarray(cols["work"], dtype=float)
    if not len(E):
        return AuditReport(np.zeros(0), np.zeros(0), 0.0, 0.0, 0.0)
    res = E + R - E[0] - W
    peak = float(np.abs(E).max())
    norm = res / peak if peak > 0 else np.zeros_like(res)
    return AuditReport(res, norm, peak, float(res[-1]), float(np.abs(norm).max()))
