"""Discrete energy, the two per-step quadratic programs, forces and stresses.

Unknowns: nodal displacements (2 per node, interleaved x/y), nodal bulk damage
alpha, interface damage zeta per interface node pair, one Mosco variable psi
per triangle and one omega per interface node pair.

Bulk terms use linear triangles.  Products of shape functions against the
degradation are lumped at the three vertices, so the element stiffness is
degraded by the vertex mean of Phi(alpha).  Interface terms are lumped at the
node pairs with weight equal to half the adjacent segment lengths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .materials import (
    BulkMaterial,
    InterfaceLaw,
    bulk_degradation_eval,
    bulk_energy_density,
    bulk_mode_dissipation_from_invariants,
    interface_degradation_eval,
    interface_mode_dissipation,
)
from .mesh import Mesh
from .qp import BoxQP

__all__ = [
    "BoxQP",
    "Discretization",
    "DisplacementLayout",
    "DamageTerms",
    "EnergyParts",
    "StressField",
    "assemble_displacement_qp",
    "unpack_displacement",
    "damage_terms",
    "assemble_damage_qp",
    "damage_objective",
    "damage_gradient",
    "energy",
    "internal_forces",
    "recover_stress",
    "CURVATURE_FLOOR",
    "DISSIPATION_CAP",
]

CURVATURE_FLOOR = 1e-12
# Upper cap on mode-mixity dissipation relative to the mode-I energy, used only
# when a mode-II energy is infinite.
DISSIPATION_CAP = 1e12

# |dev e|**2 = 0.5 v'Mv for Voigt strain v = (exx, eyy, gxy)
_M_DEV = np.array([[1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class _IfaceBlock:
    name: str
    law: InterfaceLaw
    sl: slice
    seg: np.ndarray


class Discretization:
    """Mesh plus constitutive data plus constrained displacement components.

    Parameters
    ----------
    mesh : Mesh
        Mesh with every interface of ``laws`` already split.
    materials : dict
        Subdomain name -> BulkMaterial.
    laws : dict, optional
        Interface name -> InterfaceLaw.
    constraints : iterable of (group, component)
        Displacement components prescribed by Dirichlet data; component 0 is x.
    cracked_groups : iterable of str
        Node groups where alpha is fixed at 0 (initial cracks).
    """

    def __init__(self, mesh: Mesh, materials: dict, laws: dict | None = None, constraints=(), cracked_groups=()):
        self.mesh = mesh
        self.materials = dict(materials)
        self.laws = dict(laws or {})
        missing = [s for s in mesh.subdomains if s not in self.materials]
        if missing:
            raise ConfigError(f"no material for subdomain {missing[0]!r}")
        for name in self.laws:
            if name not in mesh.interfaces:
                raise ConfigError(f"interface {name!r} has a law but is not split in the mesh")
        nn = mesh.n_nodes
        self.n_nodes = nn
        tris = mesh.triangles
        self.n_tri = len(tris)
        p = mesh.nodes[tris]
        self.area = mesh.areas
        # gradients of barycentric shape functions
        x, y = p[:, :, 0], p[:, :, 1]
        dNx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / (2 * self.area[:, None])
        dNy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / (2 * self.area[:, None])
        self.dN = np.stack([dNx, dNy], axis=2)
        B = np.zeros((self.n_tri, 3, 6))
        B[:, 0, 0::2] = dNx
        B[:, 1, 1::2] = dNy
        B[:, 2, 0::2] = dNy
        B[:, 2, 1::2] = dNx
        self.B = B
        self.gtr = B[:, 0] + B[:, 1]
        self.edofs = np.stack([2 * tris, 2 * tris + 1], axis=2).reshape(-1, 6)

        mat_names = list(self.materials)
        self.mat_index = {name: k for k, name in enumerate(mat_names)}
        tag_name = {t: s for s, t in mesh.subdomains.items()}
        tri_mat = np.array([self.mat_index[tag_name[t]] for t in mesh.tri_tags], dtype=np.int64)
        self.tri_mat = tri_mat
        self.mat_list = [self.materials[n] for n in mat_names]
        self.Kp = np.array([self.mat_list[m].Kp for m in tri_mat])
        self.mu = np.array([self.mat_list[m].mu for m in tri_mat])
        self.damageable = np.array([self.mat_list[m].damageable for m in tri_mat], dtype=bool)
        self.mat_tris = {k: np.flatnonzero(tri_mat == k) for k in range(len(self.mat_list))}

        self.Kvol = self.area[:, None, None] * self.Kp[:, None, None] * np.einsum("ei,ej->eij", self.gtr, self.gtr)
        self.Kdev = self.area[:, None, None] * self.mu[:, None, None] * np.einsum("eai,ab,ebj->eij", B, _M_DEV, B)
        self._rows = np.repeat(self.edofs, 6, axis=1).ravel()
        self._cols = np.tile(self.edofs, (1, 6)).ravel()

        # alpha: nodes of damageable triangles are unknowns, the rest stay at 1
        dmg = np.zeros(nn, dtype=bool)
        dmg[tris[self.damageable].ravel()] = True
        self.alpha_nodes = np.flatnonzero(dmg)
        cracked = np.zeros(nn, dtype=bool)
        for g in cracked_groups:
            cracked[mesh.group_nodes(g)] = True
        self.cracked = cracked
        gc = np.zeros(self.n_tri)
        eps = np.ones(self.n_tri)
        for m, mat in enumerate(self.mat_list):
            if mat.damageable:
                gc[tri_mat == m] = mat.GcI
                eps[tri_mat == m] = mat.eps
        self.GcI = gc
        self.eps = eps
        # Laplacian of the alpha-gradient term: (3 Gc eps / 8) |grad alpha|^2 -> 0.5 a'La
        kl = (0.75 * gc * eps * self.area)[:, None, None] * np.einsum("eik,ejk->eij", self.dN, self.dN)
        kl[~self.damageable] = 0.0
        rr = np.repeat(tris, 3, axis=1).ravel()
        cc = np.tile(tris, (1, 3)).ravel()
        self.L_alpha = sp.csr_matrix((kl.ravel(), (rr, cc)), shape=(nn, nn))
        # (3 Gc / (8 eps)) * int N_n, per node
        lin = np.where(self.damageable, 0.375 * gc / eps * self.area / 3.0, 0.0)
        self.alpha_source = np.bincount(tris.ravel(), np.repeat(lin, 3), minlength=nn)

        # interfaces, concatenated in the order of ``laws``
        blocks, pairs, nrm, tng, wts = [], [], [], [], []
        off = 0
        for name, law in self.laws.items():
            itf = mesh.interfaces[name]
            k = itf.n_pairs
            blocks.append(_IfaceBlock(name, law, slice(off, off + k), itf.segments + off))
            pairs.append(itf.pairs)
            nrm.append(itf.node_normals)
            tng.append(itf.node_tangents)
            wts.append(itf.node_weights)
            off += k
        self.iface_blocks = blocks
        self.n_pairs = off
        self.pairs = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)
        self.pair_normals = np.concatenate(nrm) if nrm else np.zeros((0, 2))
        self.pair_tangents = np.concatenate(tng) if tng else np.zeros((0, 2))
        self.pair_weights = np.concatenate(wts) if wts else np.zeros(0)
        self.kn = np.zeros(off)
        self.ks = np.zeros(off)
        self.kG = np.zeros(off)
        self.GciI = np.zeros(off)
        Ls_rows, Ls_cols, Ls_vals = [], [], []
        for blk in blocks:
            self.kn[blk.sl] = blk.law.kn
            self.ks[blk.sl] = blk.law.ks
            self.kG[blk.sl] = blk.law.kG
            self.GciI[blk.sl] = blk.law.GciI
            if blk.law.eps_i > 0:
                itf = mesh.interfaces[blk.name]
                coef = 2.0 * blk.law.GciI * blk.law.eps_i**2 / itf.lengths
                a, b = blk.seg[:, 0], blk.seg[:, 1]
                Ls_rows += [a, b, a, b]
                Ls_cols += [a, b, b, a]
                Ls_vals += [coef, coef, -coef, -coef]
        if Ls_rows:
            self.L_zeta = sp.csr_matrix(
                (np.concatenate(Ls_vals), (np.concatenate(Ls_rows), np.concatenate(Ls_cols))), shape=(off, off)
            )
        else:
            self.L_zeta = sp.csr_matrix((off, off))
        pa, pb = self.pairs[:, 0], self.pairs[:, 1]
        self.pair_dofs = np.column_stack([2 * pa, 2 * pa + 1, 2 * pb, 2 * pb + 1])

        fixed = np.zeros(2 * nn, dtype=bool)
        self.constraints = list(constraints)
        for group, comp in self.constraints:
            if comp not in (0, 1):
                raise ConfigError(f"displacement component must be 0 or 1, got {comp}")
            fixed[2 * mesh.group_nodes(group) + comp] = True
        self.fixed_dofs = np.flatnonzero(fixed)
        self.free_dofs = np.flatnonzero(~fixed)

    # -- helpers ------------------------------------------------------------
    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    def strains(self, u):
        """Voigt strains (exx, eyy, gxy) per triangle."""
        ue = np.asarray(u)[self.edofs]
        return np.einsum("eij,ej->ei", self.B, ue)

    def invariants(self, u):
        v = self.strains(u)
        tr = v[:, 0] + v[:, 1]
        dev2 = 0.5 * (v[:, 0] - v[:, 1]) ** 2 + 0.5 * v[:, 2] ** 2
        return tr, dev2

    def vertex_degradation(self, alpha, derivs=False):
        """Phi (and derivatives) of every triangle vertex, shape (n_tri, 3)."""
        av = np.asarray(alpha)[self.mesh.triangles]
        out = [np.ones_like(av), np.zeros_like(av), np.zeros_like(av)]
        for m, mat in enumerate(self.mat_list):
            idx = self.mat_tris[m]
            if not mat.damageable or not len(idx):
                continue
            vals = bulk_degradation_eval(mat.degradation, av[idx])
            for k in range(3):
                out[k][idx] = vals[k]
        return tuple(out) if derivs else out[0]

    def element_degradation(self, alpha):
        return self.vertex_degradation(alpha).mean(axis=1)

    def pair_degradation(self, zeta, derivs=False):
        out = [np.zeros(self.n_pairs) for _ in range(3)]
        for blk in self.iface_blocks:
            vals = interface_degradation_eval(blk.law.degradation, np.asarray(zeta)[blk.sl])
            for k in range(3):
                out[k][blk.sl] = vals[k]
        return tuple(out) if derivs else out[0]

    def pair_jumps(self, u):
        """Nodal jumps in the local (n, s) frames, shape (n_pairs, 2)."""
        u2 = np.asarray(u).reshape(-1, 2)
        w = u2[self.pairs[:, 0]] - u2[self.pairs[:, 1]]
        return np.column_stack(
            [np.einsum("ij,ij->i", w, self.pair_normals), np.einsum("ij,ij->i", w, self.pair_tangents)]
        )

    def dirichlet_vector(self, values):
        """Full displacement vector that is zero except at constrained dofs."""
        u = np.zeros(self.n_dofs)
        u[self.fixed_dofs] = values
        return u

    def initial_alpha(self):
        a = np.ones(self.n_nodes)
        a[self.cracked] = 0.0
        return a

    def initial_zeta(self):
        return np.ones(self.n_pairs)

    def check_damage(self, alpha, zeta):
        for name, v in (("alpha", alpha), ("zeta", zeta)):
            v = np.asarray(v)
            if np.any(~np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
                raise ValueError(f"{name} out of [0, 1]")

    def stiffness(self, alpha, zeta):
        """Elastic stiffness with the current degradation (both split branches at tr >= 0)."""
        phi = self.element_degradation(alpha)
        Ke = self.Kvol * phi[:, None, None] + self.Kdev * phi[:, None, None]
        K = sp.csr_matrix((Ke.ravel(), (self._rows, self._cols)), shape=(self.n_dofs, self.n_dofs))
        return K + self._interface_stiffness(zeta)

    def _interface_stiffness(self, zeta, with_weight=True):
        if not self.n_pairs:
            return sp.csr_matrix((self.n_dofs, self.n_dofs))
        f = self.pair_degradation(zeta) * (self.pair_weights if with_weight else 1.0)
        n, s = self.pair_normals, self.pair_tangents
        kap = self.kn[:, None, None] * np.einsum("pi,pj->pij", n, n) + self.ks[:, None, None] * np.einsum(
            "pi,pj->pij", s, s
        )
        kap *= f[:, None, None]
        blk = np.zeros((self.n_pairs, 4, 4))
        blk[:, :2, :2] = kap
        blk[:, 2:, 2:] = kap
        blk[:, :2, 2:] = -kap
        blk[:, 2:, :2] = -kap
        rows = np.repeat(self.pair_dofs, 4, axis=1).ravel()
        cols = np.tile(self.pair_dofs, (1, 4)).ravel()
        return sp.csr_matrix((blk.ravel(), (rows, cols)), shape=(self.n_dofs, self.n_dofs))


@dataclass(frozen=True)
class DisplacementLayout:
    """Positions of the unknown groups inside the displacement QP vector."""

    n_free: int
    n_psi: int
    n_omega: int
    u_fixed: np.ndarray

    @property
    def psi(self) -> slice:
        return slice(self.n_free, self.n_free + self.n_psi)

    @property
    def omega(self) -> slice:
        return slice(self.n_free + self.n_psi, self.n_free + self.n_psi + self.n_omega)


def assemble_displacement_qp(disc: Discretization, alpha, zeta, u_fixed_values):
    """Displacement QP with Mosco variables for fixed damage (alpha, zeta).

    Energy per triangle: min(Phi,1) Kp tr^2/2 + Phi mu |dev|^2 + |1-Phi| Kp psi^2/2
    with psi >= 0 and psi + sign * tr >= 0, sign = +1 if Phi <= 1 else -1; at
    the optimal psi this is Phi (Kp (tr+)^2/2 + mu |dev|^2) + Kp (tr-)^2/2.
    Per interface pair: weight * (phi/2 w.kappa.w + kG omega^2/2) with omega >= 0,
    omega + w_n >= 0.

    Returns ``(BoxQP, DisplacementLayout)``.
    """
    disc.check_damage(alpha, zeta)
    nd, nt, npair = disc.n_dofs, disc.n_tri, disc.n_pairs
    phi = disc.element_degradation(alpha)
    cvol = np.minimum(phi, 1.0)
    Ke = disc.Kvol * cvol[:, None, None] + disc.Kdev * phi[:, None, None]
    K = sp.csr_matrix((Ke.ravel(), (disc._rows, disc._cols)), shape=(nd, nd))
    K = (K + disc._interface_stiffness(zeta)).tocsr()

    u_fixed = disc.dirichlet_vector(u_fixed_values)
    fr, fx = disc.free_dofs, disc.fixed_dofs
    Kff = K[fr][:, fr]
    c_u = K[fr][:, fx] @ u_fixed[fx]
    offset = 0.5 * float(u_fixed[fx] @ (K[fx][:, fx] @ u_fixed[fx]))
    nf = len(fr)

    d_psi = np.abs(1.0 - phi) * disc.Kp * disc.area
    d_om = disc.kG * disc.pair_weights
    Q = sp.block_diag([Kff, sp.diags(d_psi), sp.diags(d_om)], format="csr")
    c = np.concatenate([c_u, np.zeros(nt + npair)])

    # rows over the full dof vector, then split into free and fixed parts
    sign = np.where(phi <= 1.0, 1.0, -1.0)
    r_psi = np.repeat(np.arange(nt), 6)
    v_psi = (sign[:, None] * disc.gtr).ravel()
    c_psi = disc.edofs.ravel()
    n, pd = disc.pair_normals, disc.pair_dofs
    r_om = np.repeat(np.arange(npair), 4) + nt
    v_om = np.column_stack([n, -n]).ravel()
    c_om = pd.ravel()
    Au_full = sp.csr_matrix(
        (np.concatenate([v_psi, v_om]), (np.concatenate([r_psi, r_om]), np.concatenate([c_psi, c_om]))),
        shape=(nt + npair, nd),
    )
    A_u = Au_full[:, fr]
    b = -(Au_full[:, fx] @ u_fixed[fx])
    m = nt + npair
    A = sp.hstack([A_u, sp.eye(m)], format="csr")
    lo = np.concatenate([np.full(nf, -np.inf), np.zeros(m)])
    hi = np.full(nf + m, np.inf)
    slack = np.arange(nf, nf + m)
    layout = DisplacementLayout(nf, nt, npair, u_fixed)
    return BoxQP(Q, c, lo, hi, A, b, slack, offset), layout


def unpack_displacement(disc: Discretization, layout: DisplacementLayout, x):
    """Split a displacement-QP vector into (u, psi, omega) with u over all dofs."""
    u = layout.u_fixed.copy()
    u[disc.free_dofs] = x[: layout.n_free]
    return u, x[layout.psi].copy(), x[layout.omega].copy()


def pack_displacement(disc: Discretization, layout: DisplacementLayout, u, psi=None, omega=None):
    """Inverse of :func:`unpack_displacement`; missing Mosco variables are set optimal."""
    x = np.zeros(layout.n_free + layout.n_psi + layout.n_omega)
    x[: layout.n_free] = np.asarray(u)[disc.free_dofs]
    if psi is not None:
        x[layout.psi] = psi
    if omega is not None:
        x[layout.omega] = omega
    return x


@dataclass(frozen=True)
class EnergyParts:
    """Stored energy components in J per unit thickness."""

    bulk_elastic: float
    bulk_fracture: float
    interface_elastic: float
    interface_fracture: float

    @property
    def total(self) -> float:
        return self.bulk_elastic + self.bulk_fracture + self.interface_elastic + self.interface_fracture


def _bulk_density_terms(disc, u):
    """Per triangle: degraded density Kp (tr+)^2/2 + mu|dev|^2, undegraded Kp (tr-)^2/2, tr, dev2."""
    tr, dev2 = disc.invariants(u)
    tp = np.maximum(tr, 0.0)
    tm = np.minimum(tr, 0.0)
    return 0.5 * disc.Kp * tp * tp + disc.mu * dev2, 0.5 * disc.Kp * tm * tm, tr, dev2


def energy(disc: Discretization, u, alpha, zeta) -> EnergyParts:
    """Discrete stored energy E(u, alpha, zeta)."""
    rho_p, rho_m, _, _ = _bulk_density_terms(disc, u)
    phi = disc.element_degradation(alpha)
    bulk_el = float(disc.area @ (phi * rho_p + rho_m))
    one_minus = 1.0 - np.asarray(alpha)
    bulk_fr = float(disc.alpha_source @ one_minus + 0.5 * alpha @ (disc.L_alpha @ alpha))
    if disc.n_pairs:
        w = disc.pair_jumps(u)
        fz = disc.pair_degradation(zeta)
        wn_neg = np.minimum(w[:, 0], 0.0)
        dens = 0.5 * fz * (disc.kn * w[:, 0] ** 2 + disc.ks * w[:, 1] ** 2) + 0.5 * disc.kG * wn_neg**2
        if_el = float(disc.pair_weights @ dens)
        if_fr = float(disc.pair_weights @ (disc.GciI * (1.0 - zeta)) + 0.5 * zeta @ (disc.L_zeta @ zeta))
    else:
        if_el = if_fr = 0.0
    return EnergyParts(bulk_el, bulk_fr, if_el, if_fr)


def internal_forces(disc: Discretization, u, alpha, zeta):
    """Gradient of the stored elastic energy with respect to all displacement dofs."""
    v = disc.strains(u)
    tr = v[:, 0] + v[:, 1]
    phi = disc.element_degradation(alpha)
    sig = _voigt_stress(disc, v, tr, phi)
    fe = disc.area[:, None] * np.einsum("eij,ei->ej", disc.B, sig)
    f = np.bincount(disc.edofs.ravel(), fe.ravel(), minlength=disc.n_dofs)
    if disc.n_pairs:
        w = disc.pair_jumps(u)
        fz = disc.pair_degradation(zeta)
        pn = fz * disc.kn * w[:, 0] + disc.kG * np.minimum(w[:, 0], 0.0)
        ps = fz * disc.ks * w[:, 1]
        t = disc.pair_weights[:, None] * (pn[:, None] * disc.pair_normals + ps[:, None] * disc.pair_tangents)
        ft = np.column_stack([t, -t]).ravel()
        f += np.bincount(disc.pair_dofs.ravel(), ft, minlength=disc.n_dofs)
    return f


def _voigt_stress(disc, v, tr, phi):
    tp = np.maximum(tr, 0.0)
    tm = np.minimum(tr, 0.0)
    half = 0.5 * (v[:, 0] - v[:, 1])
    sxx = phi * (disc.Kp * tp + 2 * disc.mu * half) + disc.Kp * tm
    syy = phi * (disc.Kp * tp - 2 * disc.mu * half) + disc.Kp * tm
    sxy = phi * disc.mu * v[:, 2]
    return np.column_stack([sxx, syy, sxy])


@dataclass(frozen=True)
class StressField:
    """Element stresses (Pa) and interface tractions (Pa).

    ``pn``/``ps`` are per interface segment (midpoint jump, mean zeta);
    ``pair_pn``/``pair_ps`` are per interface node pair.
    """

    sigma: np.ndarray
    trace: np.ndarray
    dev_norm: np.ndarray
    pn: np.ndarray
    ps: np.ndarray
    pair_pn: np.ndarray
    pair_ps: np.ndarray


def recover_stress(disc: Discretization, u, alpha, zeta) -> StressField:
    v = disc.strains(u)
    tr = v[:, 0] + v[:, 1]
    phi = disc.element_degradation(alpha)
    s = _voigt_stress(disc, v, tr, phi)
    sigma = np.zeros((disc.n_tri, 2, 2))
    sigma[:, 0, 0] = s[:, 0]
    sigma[:, 1, 1] = s[:, 1]
    sigma[:, 0, 1] = sigma[:, 1, 0] = s[:, 2]
    trace = s[:, 0] + s[:, 1]
    dev_norm = np.sqrt(0.5 * (s[:, 0] - s[:, 1]) ** 2 + 2 * s[:, 2] ** 2)
    pn_seg, ps_seg, pn, ps = [], [], np.zeros(disc.n_pairs), np.zeros(disc.n_pairs)
    if disc.n_pairs:
        w = disc.pair_jumps(u)
        fz = disc.pair_degradation(zeta)
        pn = fz * disc.kn * w[:, 0] + disc.kG * np.minimum(w[:, 0], 0.0)
        ps = fz * disc.ks * w[:, 1]
        for blk in disc.iface_blocks:
            itf = disc.mesh.interfaces[blk.name]
            ws = itf.segment_jump(u)
            zm = 0.5 * (zeta[blk.seg[:, 0]] + zeta[blk.seg[:, 1]])
            fm = interface_degradation_eval(blk.law.degradation, zm)[0]
            pn_seg.append(fm * blk.law.kn * ws[:, 0] + blk.law.kG * np.minimum(ws[:, 0], 0.0))
            ps_seg.append(fm * blk.law.ks * ws[:, 1])
    pn_seg = np.concatenate(pn_seg) if pn_seg else np.zeros(0)
    ps_seg = np.concatenate(ps_seg) if ps_seg else np.zeros(0)
    return StressField(sigma, trace, dev_norm, pn_seg, ps_seg, pn, ps)


@dataclass(frozen=True)
class DamageTerms:
    """Displacement-dependent coefficients of the damage functional for fixed u.

    ``w_vertex[e, v]``: A_e * rho_e / 3 multiplying Phi at triangle vertex v.
    ``alpha_diss[n]``: sum over triangles of (3/(8 eps)) D^eta_e A_e / 3.
    ``q[p]``: kn w_n^2 + ks w_s^2 at interface pair p; ``zeta_diss[p]``: D^i.
    """

    w_vertex: np.ndarray
    alpha_diss: np.ndarray
    q: np.ndarray
    zeta_diss: np.ndarray


def damage_terms(disc: Discretization, u) -> DamageTerms:
    rho_p, _, tr, dev2 = _bulk_density_terms(disc, u)
    if not np.all(np.isfinite(rho_p)):
        raise ValueError("non-finite strain energy")
    w_vertex = np.repeat((disc.area * rho_p / 3.0)[:, None], 3, axis=1)
    w_vertex[~disc.damageable] = 0.0
    D = np.zeros(disc.n_tri)
    for m, mat in enumerate(disc.mat_list):
        idx = disc.mat_tris[m]
        if mat.damageable and len(idx):
            D[idx] = np.minimum(bulk_mode_dissipation_from_invariants(mat, tr[idx], dev2[idx]), DISSIPATION_CAP * mat.GcI)
    ed = np.where(disc.damageable, 0.375 / disc.eps * D * disc.area / 3.0, 0.0)
    alpha_diss = np.bincount(disc.mesh.triangles.ravel(), np.repeat(ed, 3), minlength=disc.n_nodes)
    q = np.zeros(disc.n_pairs)
    Di = np.zeros(disc.n_pairs)
    if disc.n_pairs:
        w = disc.pair_jumps(u)
        q = disc.kn * w[:, 0] ** 2 + disc.ks * w[:, 1] ** 2
        for blk in disc.iface_blocks:
            Di[blk.sl] = np.minimum(interface_mode_dissipation(blk.law, w[blk.sl]), DISSIPATION_CAP * blk.law.GciI)
    return DamageTerms(w_vertex, alpha_diss, q, Di)


def _node_sum(disc, per_vertex):
    return np.bincount(disc.mesh.triangles.ravel(), per_vertex.ravel(), minlength=disc.n_nodes)


def damage_objective(disc: Discretization, terms: DamageTerms, alpha, zeta, alpha_prev, zeta_prev) -> float:
    """Exact H_d: damage-dependent stored energy plus the step dissipation."""
    phi_v = disc.vertex_degradation(alpha)
    val = float(np.sum(terms.w_vertex * phi_v))
    val += float(disc.alpha_source @ (1.0 - alpha) + 0.5 * alpha @ (disc.L_alpha @ alpha))
    val += float(terms.alpha_diss @ (alpha_prev - alpha))
    if disc.n_pairs:
        fz = disc.pair_degradation(zeta)
        wts = disc.pair_weights
        val += float(wts @ (0.5 * terms.q * fz + disc.GciI * (1.0 - zeta) + terms.zeta_diss * (zeta_prev - zeta)))
        val += float(0.5 * zeta @ (disc.L_zeta @ zeta))
    return val


def damage_gradient(disc: Discretization, terms: DamageTerms, alpha, zeta):
    """Gradient of H_d with respect to (alpha over all nodes, zeta)."""
    _, d1, _ = disc.vertex_degradation(alpha, derivs=True)
    ga = _node_sum(disc, terms.w_vertex * d1) - disc.alpha_source + disc.L_alpha @ alpha - terms.alpha_diss
    gz = np.zeros(disc.n_pairs)
    if disc.n_pairs:
        _, f1, _ = disc.pair_degradation(zeta, derivs=True)
        wts = disc.pair_weights
        gz = wts * (0.5 * terms.q * f1 - disc.GciI - terms.zeta_diss) + disc.L_zeta @ zeta
    return ga, gz


def assemble_damage_qp(disc: Discretization, terms: DamageTerms, alpha_it, zeta_it, alpha_prev, zeta_prev):
    """Convex quadratic model of H_d at the iterate, over (alpha[alpha_nodes], zeta).

    Degradations are replaced by their Taylor polynomials with curvature clamped
    below at CURVATURE_FLOOR; bounds are 0 <= alpha <= alpha_prev and
    0 <= zeta <= zeta_prev (alpha fixed at 0 on cracked nodes).
    """
    disc.check_damage(alpha_it, zeta_it)
    if np.any(alpha_it > alpha_prev) or np.any(zeta_it > zeta_prev):
        raise ValueError("iterate violates the irreversibility bounds")
    an = disc.alpha_nodes
    _, d1, d2 = disc.vertex_degradation(alpha_it, derivs=True)
    d2 = np.maximum(d2, CURVATURE_FLOOR)
    a_v = np.asarray(alpha_it)[disc.mesh.triangles]
    qa = _node_sum(disc, terms.w_vertex * d2)
    ca = _node_sum(disc, terms.w_vertex * (d1 - a_v * d2)) - disc.alpha_source - terms.alpha_diss
    Qa = (disc.L_alpha[an][:, an] + sp.diags(qa[an])).tocsr()
    ca = ca[an]
    # contributions of nodes kept at alpha = 1 through the Laplacian coupling
    rest = np.setdiff1d(np.arange(disc.n_nodes), an)
    if len(rest):
        ca = ca + disc.L_alpha[an][:, rest] @ np.asarray(alpha_it)[rest]
    lo_a = np.zeros(len(an))
    hi_a = np.asarray(alpha_prev, dtype=float)[an].copy()
    hi_a[disc.cracked[an]] = 0.0
    if disc.n_pairs:
        _, f1, f2 = disc.pair_degradation(zeta_it, derivs=True)
        f2 = np.maximum(f2, CURVATURE_FLOOR)
        wts = disc.pair_weights
        qz = wts * 0.5 * terms.q * f2
        cz = wts * (0.5 * terms.q * (f1 - zeta_it * f2) - disc.GciI - terms.zeta_diss)
        Qz = (disc.L_zeta + sp.diags(qz)).tocsr()
    else:
        Qz = sp.csr_matrix((0, 0))
        cz = np.zeros(0)
    Q = sp.block_diag([Qa, Qz], format="csr")
    c = np.concatenate([ca, cz])
    lo = np.concatenate([lo_a, np.zeros(disc.n_pairs)])
    hi = np.concatenate([hi_a, np.asarray(zeta_prev, dtype=float)])
    return BoxQP(Q, c, lo, hi)
