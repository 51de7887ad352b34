import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from pfczm.errors import QPConvergenceError
from pfczm.qp import BoxQP, _exact_line_search, mprgp, projected_gradient, solve_box_qp


def _random_spd(rng, n, cond=1e3):
    U, _ = np.linalg.qr(rng.normal(size=(n, n)))
    ev = np.logspace(0, np.log10(cond), n)
    return U @ np.diag(ev) @ U.T


def _brute_force(Q, c, lo, hi, A=None, b=None):
    """Minimum over all active sets (each bound or row active or not) of the equality QP.

    For a strictly convex QP the optimum is the equality-constrained solution
    of its own active set, so it is the best feasible candidate.
    """
    n = len(c)
    m = 0 if A is None else A.shape[0]
    best, xbest = np.inf, None
    for state in itertools.product((0, 1, 2), repeat=n):
        if any((s == 1 and not np.isfinite(lo[i])) or (s == 2 and not np.isfinite(hi[i])) for i, s in enumerate(state)):
            continue
        for rows in itertools.product((False, True), repeat=m):
            E, e = [], []
            for i, s in enumerate(state):
                if s:
                    E.append(np.eye(n)[i])
                    e.append(lo[i] if s == 1 else hi[i])
            for r, on in enumerate(rows):
                if on:
                    E.append(A[r])
                    e.append(b[r])
            k = len(E)
            if k > n:
                continue
            K = np.zeros((n + k, n + k))
            K[:n, :n] = Q
            rhs = np.concatenate([-c, e])
            if k:
                E = np.array(E)
                K[:n, n:] = E.T
                K[n:, :n] = E
            try:
                x = np.linalg.solve(K, rhs)[:n]
            except np.linalg.LinAlgError:
                continue
            if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
                continue
            if m and np.any(A @ x < b - 1e-12):
                continue
            f = 0.5 * x @ Q @ x + c @ x
            if f < best:
                best, xbest = f, x
    return xbest


class TestBoxQPOracle:
    def test_matches_enumeration_on_random_box_qps(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(1, 7))
            Q = _random_spd(rng, n, cond=10 ** rng.uniform(0, 3))
            c = rng.normal(size=n) * 3
            lo = np.where(rng.random(n) < 0.8, rng.uniform(-1.0, 0.0, n), -np.inf)
            hi = np.where(rng.random(n) < 0.8, rng.uniform(0.0, 1.0, n), np.inf)
            ref = _brute_force(Q, c, lo, hi)
            sol = solve_box_qp(BoxQP(sp.csr_matrix(Q), c, lo, hi), tol=1e-14, abs_tol=1e-13)
            assert sol.converged
            worst = max(worst, float(np.max(np.abs(sol.x - ref))))
        assert worst <= 1e-8

    def test_equal_bounds_are_fixed(self):
        Q = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
        sol = solve_box_qp(BoxQP(Q, np.array([-1.0, -1.0]), np.array([0.3, -5.0]), np.array([0.3, 5.0])))
        assert sol.x[0] == 0.3
        assert sol.x[1] == pytest.approx((1.0 - 0.3) / 2.0, abs=1e-9)

    def test_objective_decreases_monotonically(self):
        rng = np.random.default_rng(3)
        n = 40
        Q = _random_spd(rng, n, cond=1e4)
        c = rng.normal(size=n)
        rec = []
        mprgp(Q, c, np.full(n, -0.1), np.full(n, 0.1), np.zeros(n), 1e-12, 10_000, record=rec)
        assert len(rec) > 2
        assert np.all(np.diff(rec) <= 1e-12 * max(1.0, abs(rec[0])))

    def test_projected_gradient(self):
        g = np.array([1.0, -1.0, 1.0, -1.0, 2.0])
        x = np.array([0.0, 0.0, 1.0, 1.0, 0.5])
        lo = np.array([0.0, 0.0, 0.0, 0.0, 0.0])
        hi = np.array([1.0, 1.0, 1.0, 1.0, 1.0])
        assert np.allclose(projected_gradient(g, x, lo, hi), [0.0, -1.0, 1.0, 0.0, 2.0])

    def test_indefinite_raises(self):
        Q = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, -1.0]]))
        with pytest.raises(QPConvergenceError):
            solve_box_qp(BoxQP(Q, np.array([0.0, 1.0]), np.full(2, -np.inf), np.full(2, np.inf)))

    def test_input_validation(self):
        Q = sp.eye(2, format="csr")
        with pytest.raises(ValueError):
            solve_box_qp(BoxQP(Q, np.zeros(2), np.ones(2), np.zeros(2)))
        with pytest.raises(ValueError):
            solve_box_qp(BoxQP(Q, np.zeros(2), np.zeros(2), np.ones(2)), x0=np.full(2, 2.0))
        with pytest.raises(ValueError):
            solve_box_qp(BoxQP(Q, np.zeros(2), np.zeros(2), np.ones(2)), x0=np.zeros(3))

    def test_non_convergence_reported(self):
        rng = np.random.default_rng(5)
        Q = _random_spd(rng, 30, cond=1e6)
        sol = solve_box_qp(BoxQP(sp.csr_matrix(Q), rng.normal(size=30), np.full(30, -1.0), np.ones(30)), max_iter=2)
        assert not sol.converged and sol.iterations == 2


class TestRowConstraints:
    def test_augmented_lagrangian_matches_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            n = int(rng.integers(2, 5))
            m = int(rng.integers(1, 3))
            Q = _random_spd(rng, n, cond=10.0)
            c = rng.normal(size=n) * 2
            lo = np.full(n, -1.0)
            hi = np.full(n, 1.0)
            A = rng.normal(size=(m, n))
            b = rng.uniform(-0.5, 0.2, m)
            ref = _brute_force(Q, c, lo, hi, A, b)
            sol = solve_box_qp(BoxQP(sp.csr_matrix(Q), c, lo, hi, sp.csr_matrix(A), b), tol=1e-12, abs_tol=1e-12)
            assert sol.method == "augmented-lagrangian"
            assert sol.converged
            assert np.max(np.abs(sol.x - ref)) <= 1e-6

    def test_private_slack_newton_matches_enumeration(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            nx = int(rng.integers(1, 4))
            m = int(rng.integers(1, 3))
            Qx = _random_spd(rng, nx, cond=100.0)
            dy = rng.uniform(0.5, 5.0, m)
            Q = np.zeros((nx + m, nx + m))
            Q[:nx, :nx] = Qx
            Q[nx:, nx:] = np.diag(dy)
            c = np.concatenate([rng.normal(size=nx), np.zeros(m)])
            lo = np.concatenate([np.full(nx, -np.inf), np.zeros(m)])
            hi = np.full(nx + m, np.inf)
            A = np.hstack([rng.normal(size=(m, nx)), np.eye(m)])
            b = rng.normal(size=m)
            ref = _brute_force(Q, c, lo, hi, A, b)
            P = BoxQP(sp.csr_matrix(Q), c, lo, hi, sp.csr_matrix(A), b, slack=np.arange(nx, nx + m))
            sol = solve_box_qp(P, tol=1e-14, abs_tol=1e-13)
            assert sol.method == "newton"
            assert sol.converged
            assert np.max(np.abs(sol.x - ref)) <= 1e-8

    def test_private_slack_detection_rejects_shared_slack(self):
        Q = sp.diags([1.0, 1.0, 1.0]).tocsr()
        A = sp.csr_matrix(np.array([[1.0, 1.0, 0.0], [2.0, 1.0, 0.0]]))
        P = BoxQP(Q, np.zeros(3), np.array([-np.inf, 0.0, 0.0]), np.full(3, np.inf), A, np.ones(2), slack=np.array([1, 1]))
        assert solve_box_qp(P, tol=1e-10).method == "augmented-lagrangian"


class TestExactLineSearch:
    def test_quadratic_minimizer(self):
        # phi(t) = (t - 0.3)^2, phi'(t) = 2 (t - 0.3)
        t = _exact_line_search(lambda t: 2 * (t - 0.3), -0.6)
        assert t == pytest.approx(0.3, abs=1e-12)

    def test_full_step_when_still_descending(self):
        assert _exact_line_search(lambda t: t - 2.0, -2.0) == 1.0

    def test_piecewise_linear_derivative(self):
        # derivative of a C1 piecewise quadratic with a kink in curvature at t = 0.2
        def dphi(t):
            return -1.0 + t + 9.0 * max(t - 0.2, 0.0)

        t = _exact_line_search(dphi, -1.0)
        assert dphi(t) == pytest.approx(0.0, abs=1e-10)
        assert t == pytest.approx(0.28, abs=1e-10)
