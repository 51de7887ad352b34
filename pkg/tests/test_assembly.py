import numpy as np
import pytest

from pfczm.assembly import (
    Discretization,
    assemble_damage_qp,
    assemble_displacement_qp,
    damage_gradient,
    damage_objective,
    damage_terms,
    energy,
    internal_forces,
    pack_displacement,
    recover_stress,
    unpack_displacement,
)
from pfczm.errors import ConfigError
from pfczm.materials import (
    BulkDegradation,
    BulkMaterial,
    InterfaceDegradation,
    InterfaceLaw,
    interface_degradation_eval,
)
from pfczm.mesh import mesh_from_arrays, split_interface
from pfczm.qp import solve_box_qp

from conftest import bimaterial_strip, cross2, direct_bulk_energy, rectangle_mesh, tri_dofs

MATRIX = BulkMaterial(22e9, 12.3e9, GcI=0.25, GcII=25.0, eps=0.5e-3, degradation=BulkDegradation("rational", beta=3.0))
STIFF = BulkMaterial(192.3e9, 76.9e9)
LAW = InterfaceLaw(6.88e12, 3e12, 1e15, GciI=0.032, GciII=1.0, degradation=InterfaceDegradation("rational", 0.1))


class TestMoscoEquivalence:
    def test_single_element_cases(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for k in range(100):
            xy = rng.uniform(-1e-3, 1e-3, (3, 2))
            while abs(cross2(xy[1] - xy[0], xy[2] - xy[0])) < 1e-7:
                xy = rng.uniform(-1e-3, 1e-3, (3, 2))
            mesh = mesh_from_arrays(xy, [[0, 1, 2]], curves={"a": [[0, 1]]}, points={"p": [2]})
            cons = [("a", 0), ("p", 1)] if k % 3 == 0 else []
            disc = Discretization(mesh, {"1": MATRIX}, constraints=cons)
            u = rng.normal(size=6) * 1e-6
            alpha = rng.uniform(0, 1, 3)
            if k % 4 == 0:
                alpha[:] = 1.0  # Phi > 1 branch
            qp, layout = assemble_displacement_qp(disc, alpha, np.zeros(0), u[disc.fixed_dofs])
            tr = disc.invariants(u)[0]
            phi = disc.element_degradation(alpha)
            sign = np.where(phi <= 1.0, 1.0, -1.0)
            psi = np.maximum(-sign * tr, 0.0)
            x = pack_displacement(disc, layout, u, psi, np.zeros(0))
            tri = mesh.triangles[0]
            ref = direct_bulk_energy(MATRIX, mesh.nodes[tri], u[tri_dofs(tri)], alpha[tri])
            assert np.all(qp.A @ x >= qp.b - 1e-15 * max(1.0, np.abs(qp.b).max(initial=0)))
            got = qp.objective(x)
            worst = max(worst, abs(got - ref) / abs(ref))
            assert energy(disc, u, alpha, np.zeros(0)).bulk_elastic == pytest.approx(ref, rel=1e-10)
        assert worst <= 1e-10

    def test_single_segment_cases(self):
        rng = np.random.default_rng(1)
        worst = 0.0
        for k in range(100):
            # two triangles sharing the interface edge (0, 1); side B is tag 2
            L = rng.uniform(0.5e-3, 2e-3)
            th = rng.uniform(0, 2 * np.pi)
            t = np.array([np.cos(th), np.sin(th)])
            n = np.array([-t[1], t[0]])
            p0 = rng.uniform(-1e-3, 1e-3, 2)
            xy = np.array([p0, p0 + L * t, p0 + 0.5 * L * t + rng.uniform(0.3, 1) * L * n, p0 + 0.5 * L * t - rng.uniform(0.3, 1) * L * n])
            mesh = mesh_from_arrays(xy, [[0, 1, 2], [0, 1, 3]], [1, 2], {"A": 1, "B": 2}, {"seg": [[0, 1]]})
            mesh = split_interface(mesh, "seg", side_b="B")
            law = InterfaceLaw(
                rng.uniform(1e12, 1e13),
                rng.uniform(1e12, 1e13),
                rng.uniform(1e14, 1e15),
                GciI=0.1,
                degradation=InterfaceDegradation("exponential", 0.99, 0.005) if k % 2 else InterfaceDegradation("rational", 0.1),
            )
            disc = Discretization(mesh, {"A": STIFF, "B": STIFF}, {"seg": law})
            u = rng.normal(size=2 * mesh.n_nodes) * 1e-7
            zeta = rng.uniform(0, 1, 2)
            alpha = np.ones(mesh.n_nodes)
            qp, layout = assemble_displacement_qp(disc, alpha, zeta, np.zeros(0))
            w_raw = u.reshape(-1, 2)[mesh.interfaces["seg"].pairs[:, 0]] - u.reshape(-1, 2)[mesh.interfaces["seg"].pairs[:, 1]]
            wn, ws = w_raw @ n, w_raw @ t  # n points out of side B (tag 2 sits on the -n side)
            fz = interface_degradation_eval(law.degradation, zeta)[0]
            ref_if = np.sum(0.5 * L * (0.5 * fz * (law.kn * wn**2 + law.ks * ws**2) + 0.5 * law.kG * np.minimum(wn, 0) ** 2))
            ref_bulk = sum(
                direct_bulk_energy(STIFF, mesh.nodes[tri], u[tri_dofs(tri)], alpha[tri]) for tri in mesh.triangles
            )
            psi = np.maximum(-np.where(disc.element_degradation(alpha) <= 1, 1, -1) * disc.invariants(u)[0], 0.0)
            omega = np.maximum(-disc.pair_jumps(u)[:, 0], 0.0)
            x = pack_displacement(disc, layout, u, psi, omega)
            got = qp.objective(x)
            ref = ref_if + ref_bulk
            worst = max(worst, abs(got - ref) / ref)
            e = energy(disc, u, alpha, zeta)
            assert e.interface_elastic == pytest.approx(ref_if, rel=1e-10)
        assert worst <= 1e-10

    def test_aux_minimization_recovers_energy(self):
        """Solving the QP in the auxiliaries alone reproduces the direct energy."""
        mesh = split_interface(bimaterial_strip(4, 4, 1e-3, 1e-3), "mid")
        disc = Discretization(mesh, {"lower": MATRIX, "upper": STIFF}, {"mid": LAW}, [("bottom", 0), ("bottom", 1), ("top", 1)])
        rng = np.random.default_rng(2)
        alpha = np.clip(rng.uniform(0.3, 1.2, mesh.n_nodes), 0, 1)
        zeta = rng.uniform(0, 1, disc.n_pairs)
        g = np.zeros(len(disc.fixed_dofs))
        g[-1] = 1e-7
        qp, layout = assemble_displacement_qp(disc, alpha, zeta, g)
        sol = solve_box_qp(qp, tol=1e-12)
        u, psi, omega = unpack_displacement(disc, layout, sol.x)
        e = energy(disc, u, alpha, zeta)
        assert sol.converged
        assert sol.objective == pytest.approx(e.bulk_elastic + e.interface_elastic, rel=1e-10)


class TestOperators:
    def _disc(self):
        mesh = split_interface(bimaterial_strip(4, 4, 1e-3, 1e-3), "mid")
        return Discretization(mesh, {"lower": MATRIX, "upper": MATRIX}, {"mid": LAW}, [("bottom", 1), ("top", 1), ("left", 0)])

    def test_stiffness_symmetric_psd(self):
        disc = self._disc()
        rng = np.random.default_rng(3)
        K = disc.stiffness(rng.uniform(0, 1, disc.n_nodes), rng.uniform(0, 1, disc.n_pairs))
        assert abs(K - K.T).max() <= 1e-12 * abs(K).max()
        ev = np.linalg.eigvalsh(K.toarray())
        assert ev.min() >= -1e-9 * ev.max()

    def test_internal_forces_gradient(self):
        disc = self._disc()
        rng = np.random.default_rng(4)
        alpha = rng.uniform(0.2, 1.0, disc.n_nodes)
        zeta = rng.uniform(0.2, 1.0, disc.n_pairs)
        u = rng.normal(size=disc.n_dofs) * 1e-7
        f = internal_forces(disc, u, alpha, zeta)

        def E(v):
            e = energy(disc, v, alpha, zeta)
            return e.bulk_elastic + e.interface_elastic

        h = 1e-12
        for i in rng.choice(disc.n_dofs, 15, replace=False):
            d = np.zeros(disc.n_dofs)
            d[i] = h
            fd = (E(u + d) - E(u - d)) / (2 * h)
            assert fd == pytest.approx(f[i], rel=1e-5, abs=1e-6 * np.abs(f).max())

    def test_damage_gradient_and_qp_model(self):
        disc = self._disc()
        rng = np.random.default_rng(5)
        u = rng.normal(size=disc.n_dofs) * 1e-6
        terms = damage_terms(disc, u)
        a_prev = np.ones(disc.n_nodes)
        z_prev = np.ones(disc.n_pairs)
        alpha = rng.uniform(0.3, 0.9, disc.n_nodes)
        zeta = rng.uniform(0.3, 0.9, disc.n_pairs)
        ga, gz = damage_gradient(disc, terms, alpha, zeta)
        h = 1e-7
        for i in rng.choice(disc.n_nodes, 8, replace=False):
            d = np.zeros(disc.n_nodes)
            d[i] = h
            fd = (damage_objective(disc, terms, alpha + d, zeta, a_prev, z_prev) - damage_objective(disc, terms, alpha - d, zeta, a_prev, z_prev)) / (2 * h)
            assert fd == pytest.approx(ga[i], rel=1e-6, abs=1e-9 * np.abs(ga).max())
        for i in range(disc.n_pairs):
            d = np.zeros(disc.n_pairs)
            d[i] = h
            fd = (damage_objective(disc, terms, alpha, zeta + d, a_prev, z_prev) - damage_objective(disc, terms, alpha, zeta - d, a_prev, z_prev)) / (2 * h)
            assert fd == pytest.approx(gz[i], rel=1e-6, abs=1e-9 * np.abs(gz).max())
        qp = assemble_damage_qp(disc, terms, alpha, zeta, a_prev, z_prev)
        x = np.concatenate([alpha[disc.alpha_nodes], zeta])
        g = qp.gradient(x)
        assert np.allclose(g[: len(disc.alpha_nodes)], ga[disc.alpha_nodes], rtol=1e-9, atol=1e-12 * np.abs(ga).max())
        assert np.allclose(g[len(disc.alpha_nodes) :], gz, rtol=1e-9, atol=1e-12 * np.abs(gz).max())
        assert abs(qp.Q - qp.Q.T).max() == 0.0
        with pytest.raises(ValueError):
            assemble_damage_qp(disc, terms, alpha, zeta, alpha - 0.1, z_prev)

    def test_fracture_energy_of_uniform_damage(self):
        mesh = rectangle_mesh(4, 4, 1e-3, 1e-3)
        disc = Discretization(mesh, {"matrix": MATRIX})
        e = energy(disc, np.zeros(disc.n_dofs), np.full(mesh.n_nodes, 0.5), np.zeros(0))
        # (3 Gc / 8 eps)(1 - alpha) over the area, gradient term vanishes
        assert e.bulk_fracture == pytest.approx(0.375 * MATRIX.GcI / MATRIX.eps * 0.5 * 1e-6, rel=1e-12)

    def test_undamageable_nodes_excluded(self):
        mesh = bimaterial_strip(2, 2)
        disc = Discretization(mesh, {"lower": MATRIX, "upper": STIFF})
        lower_nodes = np.unique(mesh.triangles[mesh.subdomain_of("lower")])
        assert np.array_equal(disc.alpha_nodes, lower_nodes)

    def test_configuration_errors(self):
        mesh = bimaterial_strip(2, 2)
        with pytest.raises(ConfigError):
            Discretization(mesh, {"lower": MATRIX})
        with pytest.raises(ConfigError):
            Discretization(mesh, {"lower": MATRIX, "upper": MATRIX}, {"mid": LAW})
        with pytest.raises(ConfigError):
            Discretization(mesh, {"lower": MATRIX, "upper": MATRIX}, constraints=[("top", 2)])


def test_patch_stress_recovery_uniform():
    mesh = rectangle_mesh(5, 4, 1e-3, 1e-3)
    disc = Discretization(mesh, {"matrix": MATRIX})
    x = mesh.nodes
    exx, eyy, exy = 2e-5, -1e-5, 3e-6
    u = np.column_stack([exx * x[:, 0] + exy * x[:, 1], exy * x[:, 0] + eyy * x[:, 1]]).ravel()
    s = recover_stress(disc, u, np.ones(mesh.n_nodes), np.zeros(0))
    assert np.ptp(s.sigma, axis=0).max() <= 1e-10 * np.abs(s.sigma).max()
    phi = 1.0 + MATRIX.degradation.delta_reg
    tr = exx + eyy
    ref_xx = phi * (MATRIX.Kp * tr + MATRIX.mu * (exx - eyy))
    assert s.sigma[0, 0, 0] == pytest.approx(ref_xx, rel=1e-12)
    assert s.sigma[0, 0, 1] == pytest.approx(phi * 2 * MATRIX.mu * exy, rel=1e-12)
